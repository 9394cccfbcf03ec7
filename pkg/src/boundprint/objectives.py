"""Scalar functions of a logit vector with hand-written reverse mode.

Expressions are built from logit selections, constants, sums, scalar
multiples, ReLU, max and cross-entropy::

    >>> f = relu(Logit(0) - Logit(1) + 3.0)
    >>> f.value([1.0, 2.0])
    2.0

``grad(z)`` returns dS/dz. At kinks the subgradient is 0 for ReLU and the
first maximal argument for max.
"""

import numpy as np


class Expr:
    def value(self, z):
        raise NotImplementedError

    def backward(self, z, upstream, out):
        raise NotImplementedError

    def grad(self, z):
        z = np.asarray(z, dtype=np.float64)
        out = np.zeros_like(z)
        self.backward(z, 1.0, out)
        return out

    def __call__(self, z):
        return self.value(np.asarray(z, dtype=np.float64))

    def __add__(self, other):
        return Sum(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Sum(self, Scale(_lift(other), -1.0))

    def __rsub__(self, other):
        return Sum(_lift(other), Scale(self, -1.0))

    def __neg__(self):
        return Scale(self, -1.0)

    def __mul__(self, s):
        return Scale(self, float(s))

    __rmul__ = __mul__


def _lift(v):
    return v if isinstance(v, Expr) else Const(float(v))


class Const(Expr):
    def __init__(self, c):
        self.c = float(c)

    def value(self, z):
        return self.c

    def backward(self, z, upstream, out):
        pass


class Logit(Expr):
    def __init__(self, index):
        self.index = int(index)

    def value(self, z):
        return float(z[self.index])

    def backward(self, z, upstream, out):
        out[self.index] += upstream


class Sum(Expr):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, z):
        return self.a.value(z) + self.b.value(z)

    def backward(self, z, upstream, out):
        self.a.backward(z, upstream, out)
        self.b.backward(z, upstream, out)


class Scale(Expr):
    def __init__(self, a, s):
        self.a, self.s = a, s

    def value(self, z):
        return self.s * self.a.value(z)

    def backward(self, z, upstream, out):
        self.a.backward(z, upstream * self.s, out)


class Relu(Expr):
    def __init__(self, a):
        self.a = a

    def value(self, z):
        return max(0.0, self.a.value(z))

    def backward(self, z, upstream, out):
        if self.a.value(z) > 0.0:
            self.a.backward(z, upstream, out)


class Max(Expr):
    def __init__(self, *args):
        if not args:
            raise ValueError("Max needs at least one argument")
        self.args = args

    def _pick(self, z):
        vals = [a.value(z) for a in self.args]
        best = 0
        for idx, v in enumerate(vals):
            if v > vals[best]:
                best = idx
        return best, vals[best]

    def value(self, z):
        return self._pick(z)[1]

    def backward(self, z, upstream, out):
        self.args[self._pick(z)[0]].backward(z, upstream, out)


class CrossEntropy(Expr):
    """``-log softmax(z)[target]``."""

    def __init__(self, target):
        self.target = int(target)

    def value(self, z):
        zmax = np.max(z)
        return float(zmax + np.log(np.sum(np.exp(z - zmax))) - z[self.target])

    def backward(self, z, upstream, out):
        e = np.exp(z - np.max(z))
        p = e / np.sum(e)
        p[self.target] -= 1.0
        out += upstream * p


def relu(a):
    return Relu(_lift(a))


def maximum(*args):
    return Max(*[_lift(a) for a in args])


def boundary_objective(i, j, k, num_classes):
    """The two-hinge boundary objective as an expression (empty max is 0)."""
    others = [Logit(t) for t in range(num_classes) if t not in (i, j)]
    expr = relu(Logit(i) - Logit(j) + k)
    if others:
        expr = expr + relu(Max(*others) - Logit(i))
    return expr


def cw_hinge(j, k, num_classes):
    """``max(max_{t != j} Z_t - Z_j, -k)``."""
    others = [Logit(t) for t in range(num_classes) if t != j]
    return Max(Max(*others) - Logit(j), Const(-k))
