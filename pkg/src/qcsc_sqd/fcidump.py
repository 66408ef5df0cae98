"""FCIDUMP integral files.

Header ``&FCI NORB=..,NELEC=..,MS2=.. &END`` (``/`` also closes it), then one
``value p q r s`` line per integral with 1-based indices:

* ``p q r s`` all non-zero: two-electron integral ``(pq|rs)``;
* ``r = s = 0``: one-electron integral ``h_pq``;
* all zero: core energy.

Only one of each symmetry-equivalent integral needs to be present; the reader
fills in the rest.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from .errors import FcidumpFormatError
from .hamiltonian import HamiltonianSpec

LOG = logging.getLogger(__name__)

_HEADER_KEY_RE = re.compile(r"\b(NORB|NELEC|MS2|ISYM)\s*=\s*(-?\d+)", re.I)


def _parse_header(header: str) -> Dict[str, str]:
    return {key.upper(): value for key, value in _HEADER_KEY_RE.findall(header)}


def _header_int(values: Dict[str, str], key: str, default: int | None = None) -> int:
    raw = values.get(key)
    if raw is None:
        if default is None:
            raise FcidumpFormatError(f"FCIDUMP header missing {key}")
        return default
    return int(raw)


def _split(text: str) -> Tuple[str, List[str]]:
    lines = text.splitlines()
    for number, line in enumerate(lines):
        stripped = line.strip().upper()
        if stripped.endswith(("&END", "/")) or stripped.startswith("&END"):
            return "\n".join(lines[: number + 1]), lines[number + 1 :]
    raise FcidumpFormatError("FCIDUMP header is not terminated by &END or /")


def parse_fcidump(text: str) -> HamiltonianSpec:
    header, body = _split(text)
    values = _parse_header(header)
    n_orb = _header_int(values, "NORB")
    n_elec = _header_int(values, "NELEC")
    ms2 = _header_int(values, "MS2", 0)
    if n_orb < 1:
        raise FcidumpFormatError("NORB must be positive")
    if (n_elec + ms2) % 2 or ms2 < 0 or ms2 > n_elec:
        raise FcidumpFormatError(f"NELEC={n_elec} and MS2={ms2} are inconsistent")
    n_alpha = (n_elec + ms2) // 2
    n_beta = n_elec - n_alpha

    h = np.zeros((n_orb, n_orb))
    g = np.zeros((n_orb, n_orb, n_orb, n_orb))
    core = 0.0
    for line_no, line in enumerate(body, start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise FcidumpFormatError(f"integral line {line_no} has {len(fields)} fields: {line!r}")
        try:
            value = float(fields[0].replace("D", "E").replace("d", "e"))
            p, q, r, s = (int(field) for field in fields[1:])
        except ValueError:
            raise FcidumpFormatError(f"cannot parse integral line {line_no}: {line!r}") from None
        if not all(0 <= index <= n_orb for index in (p, q, r, s)):
            raise FcidumpFormatError(f"integral line {line_no} index out of range: {line!r}")
        if p == q == r == s == 0:
            core = value
        elif r == 0 and s == 0:
            if p == 0 or q == 0:
                raise FcidumpFormatError(f"integral line {line_no} has a zero orbital index")
            h[p - 1, q - 1] = h[q - 1, p - 1] = value
        elif 0 in (p, q, r, s):
            # orbital energies and other optional records carry no integrals we use
            LOG.debug("skipping FCIDUMP line %d: %s", line_no, line.strip())
        else:
            p, q, r, s = p - 1, q - 1, r - 1, s - 1
            for a, b, c, d in (
                (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
            ):
                g[a, b, c, d] = value
    return HamiltonianSpec(n_orb, n_alpha, n_beta, core, h, g)


def read_fcidump(path: Union[str, Path]) -> HamiltonianSpec:
    spec = parse_fcidump(Path(path).read_text())
    LOG.info(
        "read FCIDUMP %s: %d orbitals, %d alpha / %d beta electrons",
        path,
        spec.n_orb,
        spec.n_alpha,
        spec.n_beta,
    )
    return spec


def _unique_two_electron(n: int) -> Iterable[Tuple[int, int, int, int]]:
    for p in range(n):
        for q in range(p + 1):
            for r in range(n):
                for s in range(r + 1):
                    if p * (p + 1) // 2 + q >= r * (r + 1) // 2 + s:
                        yield p, q, r, s


def format_fcidump(spec: HamiltonianSpec, tol: float = 1e-15) -> str:
    n = spec.n_orb
    lines = [
        f" &FCI NORB={n:d},NELEC={spec.n_electrons:d},MS2={spec.n_alpha - spec.n_beta:d},",
        "  ORBSYM=" + "1," * n,
        "  ISYM=1,",
        " &END",
    ]
    for p, q, r, s in _unique_two_electron(n):
        value = spec.g[p, q, r, s]
        if abs(value) > tol:
            lines.append(f"{value: .17e} {p + 1:4d} {q + 1:4d} {r + 1:4d} {s + 1:4d}")
    for p in range(n):
        for q in range(p + 1):
            value = spec.h[p, q]
            if abs(value) > tol:
                lines.append(f"{value: .17e} {p + 1:4d} {q + 1:4d}    0    0")
    lines.append(f"{spec.core_energy: .17e}    0    0    0    0")
    return "\n".join(lines) + "\n"


def write_fcidump(spec: HamiltonianSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_fcidump(spec))
    LOG.info("wrote FCIDUMP %s (%d orbitals)", path, spec.n_orb)
    return path
