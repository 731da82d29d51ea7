import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


class FlopCounter:
    def __init__(self):
        self.n = 0


class CountingFloat:
    """Scalar that counts arithmetic and elementary-function calls.

    Object-dtype numpy arrays dispatch ``np.sin``/``np.arctan`` to the element
    methods, so system code runs unchanged on arrays of these.
    """

    __slots__ = ("v", "c")

    def __init__(self, v, counter):
        self.v = float(v)
        self.c = counter

    def _op(self, other, fn):
        if isinstance(other, np.ndarray):
            return NotImplemented  # let numpy broadcast elementwise
        o = other.v if isinstance(other, CountingFloat) else float(other)
        self.c.n += 1
        return CountingFloat(fn(self.v, o), self.c)

    def __add__(self, o): return self._op(o, lambda a, b: a + b)
    def __radd__(self, o): return self._op(o, lambda a, b: b + a)
    def __sub__(self, o): return self._op(o, lambda a, b: a - b)
    def __rsub__(self, o): return self._op(o, lambda a, b: b - a)
    def __mul__(self, o): return self._op(o, lambda a, b: a * b)
    def __rmul__(self, o): return self._op(o, lambda a, b: b * a)
    def __truediv__(self, o): return self._op(o, lambda a, b: a / b)
    def __rtruediv__(self, o): return self._op(o, lambda a, b: b / a)

    def __neg__(self):
        return CountingFloat(-self.v, self.c)

    def sin(self):
        self.c.n += 1
        return CountingFloat(np.sin(self.v), self.c)

    def arctan(self):
        self.c.n += 1
        return CountingFloat(np.arctan(self.v), self.c)


@pytest.fixture
def counter():
    return FlopCounter()


@pytest.fixture
def counting():
    """Factory turning float arrays into object arrays of counting scalars."""

    def make(values, counter):
        arr = np.asarray(values, dtype=np.float64)
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            out[idx] = CountingFloat(v, counter)
        return out

    return make
