"""Value files, the JSON model file and CSV writers used by the command line."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .mixture_fit import MixtureParams

SCHEMA_VERSION = 1
FORMATS = ("csv", "f64le")


class InputError(ValueError):
    """A data or model file could not be read."""


def _parse_float(tok: str) -> float:
    # float() accepts "inf", "-inf" and "nan" as well as decimal literals
    return float(tok)


def read_values(path: str | Path, fmt: str = "csv") -> np.ndarray:
    """Read one number per line (``csv``) or raw little-endian doubles (``f64le``).

    Lines starting with ``#`` are comments. A non-numeric first data line is
    taken as a header and skipped.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise InputError(f"unknown input format {fmt!r}")
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if fmt == "f64le":
        if len(raw) == 0:
            raise InputError(f"{path}: empty file")
        if len(raw) % 8:
            raise InputError(f"{path}: size {len(raw)} is not a multiple of 8 bytes")
        return np.frombuffer(raw, dtype="<f8").astype(float)
    lines = raw.decode("utf-8-sig").splitlines()
    values = []
    seen_data = False
    for lineno, line in enumerate(lines, start=1):
        tok = line.strip()
        if not tok or tok.startswith("#"):
            continue
        first, seen_data = not seen_data, True
        try:
            values.append(_parse_float(tok))
        except ValueError:
            if first:
                continue
            raise InputError(f"{path}:{lineno}: cannot parse {tok!r} as a number") from None
    if not values:
        raise InputError(f"{path}: no values")
    return np.array(values, dtype=float)


def fmt_float(x: float) -> str:
    """Shortest decimal string that reads back to the same double."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(out: TextIO, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()):
    for c in comments:
        out.write(f"# {c}\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(fmt_float(v) if isinstance(v, float) else str(v) for v in row) + "\n")


@dataclass(frozen=True)
class ModelFile:
    params: MixtureParams
    loglik: float
    n_iter: int
    converged: bool
    bin_edges: tuple[float, ...]
    bin_counts: tuple[int, ...]
    bin_rule: str
    n_total: int
    n_pos_inf: int
    n_neg_inf: int
    seed: int
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        p = self.params
        doc = {
            "schema_version": self.schema_version,
            "params": {"pi0": p.pi0, "mu0": p.mu0, "var0": p.var0, "mu1": p.mu1, "var1": p.var1},
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "bin_edges": list(self.bin_edges),
            "bin_counts": list(self.bin_counts),
            "bin_rule": self.bin_rule,
            "n_total": self.n_total,
            "n_pos_inf": self.n_pos_inf,
            "n_neg_inf": self.n_neg_inf,
            "seed": self.seed,
        }
        # json writes floats with repr, so values round-trip exactly
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelFile":
        try:
            doc = json.loads(text)
            if doc.get("schema_version") != SCHEMA_VERSION:
                raise InputError(f"unsupported model schema_version {doc.get('schema_version')!r}")
            p = doc["params"]
            return cls(
                params=MixtureParams(float(p["pi0"]), float(p["mu0"]), float(p["var0"]),
                                     float(p["mu1"]), float(p["var1"])),
                loglik=float(doc["loglik"]),
                n_iter=int(doc["n_iter"]),
                converged=bool(doc["converged"]),
                bin_edges=tuple(float(e) for e in doc["bin_edges"]),
                bin_counts=tuple(int(c) for c in doc["bin_counts"]),
                bin_rule=str(doc["bin_rule"]),
                n_total=int(doc["n_total"]),
                n_pos_inf=int(doc["n_pos_inf"]),
                n_neg_inf=int(doc["n_neg_inf"]),
                seed=int(doc["seed"]),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"malformed model file: {exc}") from None

    @classmethod
    def read(cls, path: str | Path) -> "ModelFile":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_json(text)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def render(fn, *args, **kwargs) -> str:
    """Run a writer against an in-memory buffer and return the text."""
    buf = io.StringIO()
    fn(buf, *args, **kwargs)
    return buf.getvalue()
