"""Array-valued dual numbers for forward-mode differentiation.

A :class:`Dual` pairs a primal array ``val`` with a tangent array ``eps`` of
the same shape.  Either component may itself be a :class:`Dual`, which is how
second derivatives are obtained.  Every dual carries an integer ``tag`` naming
the perturbation it tracks; operations between duals of different tags treat
the older one as a constant, so nested derivatives never confuse perturbations.

Duals hook into NumPy through ``__array_ufunc__`` and ``__array_function__``,
so ordinary NumPy code (``np.exp``, ``@``, ``np.stack``, ``np.linalg.solve``,
...) differentiates without modification.  Unsupported functions raise
``TypeError``.
"""

import itertools

import numpy as np

_tag_counter = itertools.count(1)


def new_tag():
    return next(_tag_counter)


def _shape(x):
    return x.shape if isinstance(x, Dual) else np.shape(x)


def primal(x):
    """Strip all tangent information and return the innermost value."""
    while isinstance(x, Dual):
        x = x.val
    return x


def split(x, tag):
    """Return ``(val, eps)`` of ``x`` with respect to ``tag``; ``eps`` is None for constants."""
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.eps
    return x, None


def tangent(x, tag):
    """Tangent of ``x`` along perturbation ``tag`` (zeros if ``x`` does not depend on it)."""
    if isinstance(x, Dual) and x.tag == tag:
        return x.eps
    return np.zeros(_shape(x))


def _top_tag(args):
    tag = 0
    for a in args:
        if isinstance(a, Dual) and a.tag > tag:
            tag = a.tag
    return tag


def _bcast(e, shape):
    if _shape(e) == shape:
        return e
    return e + np.zeros(shape)


def _make(val, eps, tag):
    if eps is None:
        return val
    return Dual(val, _bcast(eps, _shape(val)), tag)


def _acc(*terms):
    out = None
    for t in terms:
        if t is None:
            continue
        out = t if out is None else out + t
    return out


class Dual:
    __slots__ = ("val", "eps", "tag")
    __array_priority__ = 1000

    def __init__(self, val, eps, tag):
        self.val = val
        self.eps = eps
        self.tag = tag

    @classmethod
    def seed(cls, val, direction):
        """Start a new perturbation of ``val`` along ``direction``."""
        if not isinstance(val, Dual):
            val = np.asarray(val, dtype=float)
        return cls(val, np.asarray(direction, dtype=float), new_tag())

    @property
    def shape(self):
        return np.shape(primal(self))

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def T(self):
        return Dual(self.val.T, self.eps.T, self.tag)

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.eps[idx], self.tag)

    def reshape(self, *shape):
        return np.reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None):
        return np.sum(self, axis=axis)

    def __repr__(self):
        return f"Dual(val={self.val!r}, eps={self.eps!r}, tag={self.tag})"

    __add__ = lambda self, o: np.add(self, o)
    __radd__ = lambda self, o: np.add(o, self)
    __sub__ = lambda self, o: np.subtract(self, o)
    __rsub__ = lambda self, o: np.subtract(o, self)
    __mul__ = lambda self, o: np.multiply(self, o)
    __rmul__ = lambda self, o: np.multiply(o, self)
    __truediv__ = lambda self, o: np.true_divide(self, o)
    __rtruediv__ = lambda self, o: np.true_divide(o, self)
    __pow__ = lambda self, o: np.power(self, o)
    __rpow__ = lambda self, o: np.power(o, self)
    __matmul__ = lambda self, o: np.matmul(self, o)
    __rmatmul__ = lambda self, o: np.matmul(o, self)
    __neg__ = lambda self: np.negative(self)
    __pos__ = lambda self: self
    __abs__ = lambda self: np.absolute(self)
    __lt__ = lambda self, o: np.less(self, o)
    __le__ = lambda self, o: np.less_equal(self, o)
    __gt__ = lambda self, o: np.greater(self, o)
    __ge__ = lambda self, o: np.greater_equal(self, o)
    __eq__ = lambda self, o: np.equal(self, o)
    __ne__ = lambda self, o: np.not_equal(self, o)
    __hash__ = None

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if ufunc in _PRIMAL_UFUNCS:
            return ufunc(*[primal(x) for x in inputs])
        rule = _UFUNC_RULES.get(ufunc)
        if rule is None:
            return NotImplemented
        return rule(_top_tag(inputs), *inputs)

    def __array_function__(self, func, types, args, kwargs):
        impl = _FUNCTION_RULES.get(func)
        if impl is None:
            return NotImplemented
        return impl(*args, **kwargs)


# -- ufunc rules -------------------------------------------------------------

def _unary(f, df):
    def rule(tag, a):
        v, e = split(a, tag)
        r = f(v)
        return Dual(r, df(v, r) * e, tag)
    return rule


def _add(tag, a, b):
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    return _make(av + bv, _acc(ae, be), tag)


def _subtract(tag, a, b):
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    return _make(av - bv, _acc(ae, None if be is None else -be), tag)


def _bilinear(op):
    def rule(tag, a, b):
        av, ae = split(a, tag)
        bv, be = split(b, tag)
        return _make(op(av, bv), _acc(
            None if ae is None else op(ae, bv),
            None if be is None else op(av, be),
        ), tag)
    return rule


def _divide(tag, a, b):
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    q = av / bv
    num = _acc(ae, None if be is None else -(q * be))
    return _make(q, None if num is None else num / bv, tag)


def _power(tag, a, b):
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    r = av ** bv
    return _make(r, _acc(
        None if ae is None else bv * av ** (bv - 1) * ae,
        None if be is None else r * np.log(av) * be,
    ), tag)


def _extremum(pick_first):
    def rule(tag, a, b):
        mask = pick_first(primal(a), primal(b))
        av, ae = split(a, tag)
        bv, be = split(b, tag)
        shape = np.broadcast_shapes(_shape(av), _shape(bv))
        ae = np.zeros(shape) if ae is None else ae
        be = np.zeros(shape) if be is None else be
        return _make(np.where(mask, av, bv), np.where(mask, ae, be), tag)
    return rule


def _logaddexp(tag, a, b):
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    r = np.logaddexp(av, bv)
    return _make(r, _acc(
        None if ae is None else ae * np.exp(av - r),
        None if be is None else be * np.exp(bv - r),
    ), tag)


def _sign_of(v):
    return np.sign(primal(v))


_UFUNC_RULES = {
    np.add: _add,
    np.subtract: _subtract,
    np.multiply: _bilinear(np.multiply),
    np.matmul: _bilinear(np.matmul),
    np.true_divide: _divide,
    np.power: _power,
    np.maximum: _extremum(np.greater_equal),
    np.minimum: _extremum(np.less_equal),
    np.logaddexp: _logaddexp,
    np.negative: _unary(np.negative, lambda v, r: -1.0),
    np.positive: _unary(np.positive, lambda v, r: 1.0),
    np.exp: _unary(np.exp, lambda v, r: r),
    np.expm1: _unary(np.expm1, lambda v, r: r + 1.0),
    np.log: _unary(np.log, lambda v, r: 1.0 / v),
    np.log1p: _unary(np.log1p, lambda v, r: 1.0 / (1.0 + v)),
    np.sqrt: _unary(np.sqrt, lambda v, r: 0.5 / r),
    np.square: _unary(np.square, lambda v, r: 2.0 * v),
    np.reciprocal: _unary(np.reciprocal, lambda v, r: -(r * r)),
    np.sin: _unary(np.sin, lambda v, r: np.cos(v)),
    np.cos: _unary(np.cos, lambda v, r: -np.sin(v)),
    np.tan: _unary(np.tan, lambda v, r: 1.0 + r * r),
    np.sinh: _unary(np.sinh, lambda v, r: np.cosh(v)),
    np.cosh: _unary(np.cosh, lambda v, r: np.sinh(v)),
    np.tanh: _unary(np.tanh, lambda v, r: 1.0 - r * r),
    np.arctan: _unary(np.arctan, lambda v, r: 1.0 / (1.0 + v * v)),
    np.absolute: _unary(np.absolute, lambda v, r: _sign_of(v)),
}

_PRIMAL_UFUNCS = {
    np.less, np.less_equal, np.greater, np.greater_equal, np.equal,
    np.not_equal, np.isfinite, np.isnan, np.isinf, np.sign, np.floor,
    np.ceil, np.signbit,
}


# -- array function rules ----------------------------------------------------

def _linear(func):
    def impl(a, *args, **kwargs):
        if not isinstance(a, Dual):
            return func(a, *args, **kwargs)
        return Dual(func(a.val, *args, **kwargs), func(a.eps, *args, **kwargs), a.tag)
    return impl


def _bilinear_fn(func):
    def impl(a, b, *args, **kwargs):
        tag = _top_tag((a, b))
        av, ae = split(a, tag)
        bv, be = split(b, tag)
        return _make(func(av, bv, *args, **kwargs), _acc(
            None if ae is None else func(ae, bv, *args, **kwargs),
            None if be is None else func(av, be, *args, **kwargs),
        ), tag)
    return impl


def _joiner(func):
    def impl(arrays, *args, **kwargs):
        arrays = list(arrays)
        tag = _top_tag(arrays)
        vals, epss = [], []
        for x in arrays:
            v, e = split(x, tag)
            vals.append(v)
            epss.append(np.zeros(_shape(v)) if e is None else e)
        return Dual(func(vals, *args, **kwargs), func(epss, *args, **kwargs), tag)
    return impl


def _where(cond, a, b):
    cond = primal(cond)
    tag = _top_tag((a, b))
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    shape = np.broadcast_shapes(np.shape(cond), _shape(av), _shape(bv))
    ae = np.zeros(shape) if ae is None else ae
    be = np.zeros(shape) if be is None else be
    return _make(np.where(cond, av, bv), np.where(cond, ae, be), tag)


def _like(func):
    def impl(a, *args, **kwargs):
        kwargs.setdefault("dtype", float)
        return func(np.empty(_shape(a)), *args, **kwargs)
    return impl


def _solve(a, b):
    tag = _top_tag((a, b))
    av, ae = split(a, tag)
    bv, be = split(b, tag)
    x = np.linalg.solve(av, bv)
    rhs = _acc(be, None if ae is None else -(ae @ x))
    return _make(x, None if rhs is None else np.linalg.solve(av, rhs), tag)


def _inv(a):
    ai = np.linalg.inv(a.val)
    return Dual(ai, -(ai @ a.eps @ ai), a.tag)


def _det(a):
    d = np.linalg.det(a.val)
    return Dual(d, d * np.trace(np.linalg.solve(a.val, a.eps)), a.tag)


def _slogdet(a):
    sign, logdet = np.linalg.slogdet(a.val)
    return primal(sign), Dual(logdet, np.trace(np.linalg.solve(a.val, a.eps)), a.tag)


def _norm(x, ord=None):
    if ord not in (None, 2, "fro"):
        raise TypeError("Dual norm supports only the 2-/Frobenius norm")
    return np.sqrt(np.sum(x * x))


def _mean(a, axis=None, **kwargs):
    return _linear(np.mean)(a, axis=axis, **kwargs)


_FUNCTION_RULES = {
    np.sum: _linear(np.sum),
    np.mean: _mean,
    np.trace: _linear(np.trace),
    np.diag: _linear(np.diag),
    np.diagonal: _linear(np.diagonal),
    np.transpose: _linear(np.transpose),
    np.reshape: _linear(np.reshape),
    np.ravel: _linear(np.ravel),
    np.squeeze: _linear(np.squeeze),
    np.atleast_1d: _linear(np.atleast_1d),
    np.atleast_2d: _linear(np.atleast_2d),
    np.expand_dims: _linear(np.expand_dims),
    np.broadcast_to: _linear(np.broadcast_to),
    np.cumsum: _linear(np.cumsum),
    np.stack: _joiner(np.stack),
    np.concatenate: _joiner(np.concatenate),
    np.dot: _bilinear_fn(np.dot),
    np.outer: _bilinear_fn(np.outer),
    np.where: _where,
    np.zeros_like: _like(np.zeros_like),
    np.ones_like: _like(np.ones_like),
    np.shape: _shape,
    np.ndim: lambda a: len(_shape(a)),
    np.linalg.solve: _solve,
    np.linalg.inv: _inv,
    np.linalg.det: _det,
    np.linalg.slogdet: _slogdet,
    np.linalg.norm: _norm,
}
