"""Floating-point formats and per-stage precision policies.

A value "computed in precision p" is produced by native p-format arithmetic:
inputs are rounded to p once and every elementary operation then rounds to p.
numpy gives exactly this for ``float32``/``float64`` arrays, so the formats
below are thin wrappers around the corresponding dtypes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FloatFormat",
    "StagePrecision",
    "PrecisionPolicy",
    "Variant",
    "round_to",
    "machine_epsilon",
    "policy_for",
    "wider",
    "S",
    "D",
]


class FloatFormat(enum.Enum):
    BINARY32 = "binary32"
    BINARY64 = "binary64"

    # identity checks instead of dict lookups: these sit on the evaluation hot path
    @property
    def dtype(self) -> np.dtype:
        return _F32 if self is FloatFormat.BINARY32 else _F64

    @property
    def epsilon(self) -> float:
        return _EPS32 if self is FloatFormat.BINARY32 else _EPS64

    @property
    def short(self) -> str:
        return "S" if self is FloatFormat.BINARY32 else "D"


_F32 = np.dtype(np.float32)
_F64 = np.dtype(np.float64)
_EPS32 = float(np.finfo(np.float32).eps)
_EPS64 = float(np.finfo(np.float64).eps)

S = FloatFormat.BINARY32
D = FloatFormat.BINARY64


def machine_epsilon(p: FloatFormat) -> float:
    """Gap between 1 and the next representable number in ``p``."""
    return p.epsilon


def round_to(x, p: FloatFormat):
    """Round ``x`` to the nearest (ties-to-even) value representable in ``p``.

    The result is returned as binary64 so that it can be compared with and
    stored next to ordinary Python floats. Overflow gives ``inf`` and NaN
    propagates; no exception is raised.
    """
    with np.errstate(over="ignore"):
        out = np.asarray(x, dtype=np.float64).astype(p.dtype).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def wider(a: FloatFormat, b: FloatFormat) -> FloatFormat:
    return a if a is b or a is D else b


@dataclass(frozen=True)
class StagePrecision:
    """Formats used for one right-hand-side evaluation.

    ``f_prec`` drives the agent term, ``g_prec`` the pairwise interaction and
    ``sum_prec`` the weighting and accumulation of the interactions.
    """

    f_prec: FloatFormat
    sum_prec: FloatFormat
    g_prec: FloatFormat

    @classmethod
    def uniform(cls, p: FloatFormat) -> "StagePrecision":
        return cls(p, p, p)

    @property
    def lowest(self) -> FloatFormat:
        fmts = (self.f_prec, self.sum_prec, self.g_prec)
        return max(fmts, key=lambda f: f.epsilon)

    def label(self) -> str:
        return self.f_prec.short + self.sum_prec.short + self.g_prec.short


class Variant(enum.Enum):
    SINGLE = "single"
    MIXED1 = "mixed1"
    MIXED2 = "mixed2"
    DOUBLE = "double"

    @classmethod
    def parse(cls, name: "str | Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(
                f"unknown variant {name!r}; expected one of "
                + ", ".join(v.value for v in cls)
            ) from None


@dataclass(frozen=True)
class PrecisionPolicy:
    """Assignment of a :class:`StagePrecision` to stages 2, 3 and 4.

    Stage 1 is the previous step's stage 4 (FSAL); the very first k1 uses
    ``first_step_k1``, which equals the stage-4 row.

    ``storage`` is the format of the accepted solution, the time variable and
    the step size. Only the pure single-precision solver uses binary32 here;
    the tableau combinations and the error estimate are carried out in
    binary64 in every case and then rounded to ``storage``.
    """

    name: str
    per_stage: dict
    first_step_k1: StagePrecision
    storage: FloatFormat = D

    def stage(self, index: int) -> StagePrecision:
        if index == 1:
            return self.first_step_k1
        return self.per_stage[index]

    @property
    def lowest(self) -> FloatFormat:
        fmts = [sp.lowest for sp in self.per_stage.values()]
        fmts += [self.first_step_k1.lowest, self.storage]
        return max(fmts, key=lambda f: f.epsilon)

    @classmethod
    def from_rows(cls, name, k2, k3, k4, storage=D) -> "PrecisionPolicy":
        return cls(name, {2: k2, 3: k3, 4: k4}, k4, storage)


_SSS = StagePrecision(S, S, S)
_DDS = StagePrecision(D, D, S)
_DDD = StagePrecision(D, D, D)


def policy_for(variant: "Variant | str") -> PrecisionPolicy:
    """The four solver variants (columns are F, sum, G):

    ======  =====  ======  ======  ======
    stage   Single Mixed1  Mixed2  Double
    ======  =====  ======  ======  ======
    k2      SSS    SSS     DDS     DDD
    k3      SSS    SSS     DDS     DDD
    k4      SSS    DDS     DDS     DDD
    ======  =====  ======  ======  ======
    """
    v = Variant.parse(variant)
    if v is Variant.SINGLE:
        return PrecisionPolicy.from_rows(v.value, _SSS, _SSS, _SSS, storage=S)
    if v is Variant.MIXED1:
        return PrecisionPolicy.from_rows(v.value, _SSS, _SSS, _DDS)
    if v is Variant.MIXED2:
        return PrecisionPolicy.from_rows(v.value, _DDS, _DDS, _DDS)
    return PrecisionPolicy.from_rows(v.value, _DDD, _DDD, _DDD)
