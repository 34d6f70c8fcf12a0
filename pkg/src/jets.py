"""
Truncated multivariate Taylor arithmetic ("jets") in four variables.

A jet stores every Taylor coefficient of a smooth function at a point up to
a fixed total degree. Arithmetic and elementary functions act on the
truncated series, so partial derivatives of any expression built from the
chart coordinates are exact up to floating point rounding; no step sizes are
involved anywhere.

Jets may carry a tensor shape: a metric is a (4, 4) jet whose coefficient
array has shape (4, 4, N). Products of tensor-valued jets go through
``contract``, an einsum over the tensor indices with truncated series
multiplication on the coefficient axis.
"""

import itertools
import math
from functools import lru_cache
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from src.errors import ConfigurationError, DomainError, OrderError, SingularPointError

NVARS = 4
MAX_ORDER = 4

# Reserved einsum letter for the pair axis of truncated products
_PAIR = 'Z'


def _monomials(nvars: int, order: int) -> List[Tuple[int, ...]]:
    """Multi-indices of total degree <= order in graded-lex order."""
    result = []
    for degree in range(order + 1):
        level = [e for e in itertools.product(range(degree + 1), repeat=nvars)
                 if sum(e) == degree]
        level.sort(reverse=True)
        result.extend(level)
    return result


class JetSpace:
    """
    Storage layout shared by every jet of one truncation order.

    Attributes:
        order: Maximal total degree stored
        nvars: Number of variables (always 4 for chart coordinates)
        size: Number of coefficient slots, C(nvars + order, nvars)
        exponents: (size, nvars) multi-indices in graded-lex order
        degrees: (size,) total degree of every slot
        factorials: (size,) product of factorials of every multi-index
        left, right: slot indices of every pair whose degrees add up to <= order
        scatter: (pairs, size) 0/1 matrix summing pair products into slots
    """

    def __init__(self, order: int, nvars: int = NVARS):
        if not 0 <= order <= MAX_ORDER:
            raise OrderError(f"Jet order must be in [0, {MAX_ORDER}], got {order}")

        self.order = order
        self.nvars = nvars

        monomials = _monomials(nvars, order)
        self.index = {e: k for k, e in enumerate(monomials)}
        self.size = len(monomials)
        self.exponents = np.array(monomials, dtype=int).reshape(self.size, nvars)
        self.degrees = self.exponents.sum(axis=1)
        self.factorials = np.array(
            [math.prod(math.factorial(p) for p in e) for e in monomials], dtype=float
        )

        left, right, target = [], [], []
        for i, a in enumerate(monomials):
            for j, b in enumerate(monomials):
                total = tuple(p + q for p, q in zip(a, b))
                if sum(total) <= order:
                    left.append(i)
                    right.append(j)
                    target.append(self.index[total])
        self.left = np.array(left, dtype=int)
        self.right = np.array(right, dtype=int)
        self.scatter = np.zeros((len(left), self.size))
        self.scatter[np.arange(len(left)), target] = 1.0

        # d/dx_v: slot beta receives (beta_v + 1) * c[beta + e_v]
        self.diff_maps = []
        for v in range(nvars):
            targets, sources, factors = [], [], []
            for k, e in enumerate(monomials):
                if e[v] >= 1:
                    lowered = list(e)
                    lowered[v] -= 1
                    targets.append(self.index[tuple(lowered)])
                    sources.append(k)
                    factors.append(float(e[v]))
            self.diff_maps.append((np.array(targets, dtype=int),
                                   np.array(sources, dtype=int),
                                   np.array(factors)))

        self.masks = [(self.degrees <= o).astype(float) for o in range(order + 1)]

    def __repr__(self) -> str:
        return f"JetSpace(order={self.order}, nvars={self.nvars}, size={self.size})"


@lru_cache(maxsize=None)
def get_space(order: int, nvars: int = NVARS) -> JetSpace:
    """Shared JetSpace for a truncation order."""
    return JetSpace(order, nvars)


Scalar = Union[float, int, np.ndarray]


class Jet:
    """
    Truncated Taylor expansion of a (possibly tensor-valued) function.

    ``coeffs`` has shape ``shape + (space.size,)``; ``order`` is the degree up
    to which the coefficients are trustworthy. Derivatives lower it by one,
    products take the minimum of the operand orders.
    """

    __slots__ = ('coeffs', 'order', 'space')
    # Keep numpy from turning ndarray * Jet into an object array
    __array_ufunc__ = None

    def __init__(self, coeffs, space: JetSpace, order: int = None):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[-1] != space.size:
            raise ConfigurationError(
                f"Coefficient array of shape {coeffs.shape} does not fit {space}"
            )
        order = space.order if order is None else int(order)
        if order < 0:
            raise OrderError(f"Jet order cannot be negative ({order})")
        if order < space.order:
            coeffs = coeffs * space.masks[order]
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.order = order
        self.space = space

    # ---- basic properties ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        """Constant term (function value at the expansion point)."""
        return self.coeffs[..., 0]

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("len() of a scalar jet")
        return self.shape[0]

    def __getitem__(self, key) -> 'Jet':
        if not isinstance(key, tuple):
            key = (key,)
        if len(key) > len(self.shape):
            raise IndexError(f"Too many indices for jet of shape {self.shape}")
        return Jet(self.coeffs[key + (slice(None),)], self.space, self.order)

    def transpose(self, *axes) -> 'Jet':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(len(self.shape))))
        return Jet(self.coeffs.transpose(tuple(axes) + (len(self.shape),)),
                   self.space, self.order)

    @property
    def T(self) -> 'Jet':
        return self.transpose()

    def with_order(self, order: int) -> 'Jet':
        """Same coefficients, trusted only up to ``order``."""
        return Jet(self.coeffs, self.space, min(order, self.order))

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, value={self.value!r})"

    # ---- coercion ----

    def _lift(self, other) -> 'Jet':
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ConfigurationError(
                    f"Cannot combine jets of {self.space} and {other.space}"
                )
            return other
        return constant(other, self.space)

    # ---- arithmetic ----

    def __add__(self, other) -> 'Jet':
        other = self._lift(other)
        return Jet(self.coeffs + other.coeffs, self.space, min(self.order, other.order))

    __radd__ = __add__

    def __sub__(self, other) -> 'Jet':
        other = self._lift(other)
        return Jet(self.coeffs - other.coeffs, self.space, min(self.order, other.order))

    def __rsub__(self, other) -> 'Jet':
        return self._lift(other) - self

    def __neg__(self) -> 'Jet':
        return Jet(-self.coeffs, self.space, self.order)

    def __pos__(self) -> 'Jet':
        return self

    def __mul__(self, other) -> 'Jet':
        if not isinstance(other, Jet):
            scale = np.asarray(other, dtype=float)
            return Jet(self.coeffs * scale[..., None], self.space, self.order)
        other = self._lift(other)
        space = self.space
        products = self.coeffs[..., space.left] * other.coeffs[..., space.right]
        return Jet(products @ space.scatter, space, min(self.order, other.order))

    __rmul__ = __mul__

    def __truediv__(self, other) -> 'Jet':
        if not isinstance(other, Jet):
            divisor = np.asarray(other, dtype=float)
            if np.any(divisor == 0.0):
                raise SingularPointError("Division of a jet by zero")
            return Jet(self.coeffs / divisor[..., None], self.space, self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other) -> 'Jet':
        return reciprocal(self) * other

    def __pow__(self, exponent) -> 'Jet':
        if isinstance(exponent, (int, np.integer)):
            return pow_int(self, int(exponent))
        return pow_real(self, float(exponent))


# ==================== Construction ====================

def constant(value: Scalar, space: JetSpace) -> Jet:
    """Jet of a constant (all derivatives zero)."""
    value = np.asarray(value, dtype=float)
    coeffs = np.zeros(value.shape + (space.size,))
    coeffs[..., 0] = value
    return Jet(coeffs, space)


def zeros(shape: Tuple[int, ...], space: JetSpace) -> Jet:
    return Jet(np.zeros(tuple(shape) + (space.size,)), space)


def seed(i: int, value: float, order: int = MAX_ORDER) -> Jet:
    """
    Jet of the coordinate function x_i expanded at x_i = value.

    Raises:
        ConfigurationError: If i is not one of the four chart variables

    Example:
        >>> x = seed(0, 2.0)
        >>> partial(x * x, (1, 0, 0, 0))
        4.0
    """
    if not 0 <= int(i) < NVARS:
        raise ConfigurationError(f"Seed index must be in 0..{NVARS - 1}, got {i}")
    space = get_space(order)
    coeffs = np.zeros(space.size)
    coeffs[0] = float(value)
    if order >= 1:
        unit = [0] * NVARS
        unit[int(i)] = 1
        coeffs[space.index[tuple(unit)]] = 1.0
    return Jet(coeffs, space)


def coordinates(point: Sequence[float], order: int = MAX_ORDER) -> Tuple[Jet, ...]:
    """Seed all four chart coordinates at ``point``."""
    if len(point) != NVARS:
        raise ConfigurationError(f"Expected a point with {NVARS} coordinates, got {len(point)}")
    return tuple(seed(i, float(v), order) for i, v in enumerate(point))


def stack(nested, space: JetSpace = None) -> Jet:
    """
    Build a tensor-valued jet from nested lists of jets and numbers.

    Numbers are treated as constants; the result order is the minimum order
    of the jets involved.
    """
    jets = []

    def _collect(item):
        if isinstance(item, Jet):
            jets.append(item)
        elif isinstance(item, (list, tuple)):
            for sub in item:
                _collect(sub)

    _collect(nested)
    if space is None:
        if not jets:
            raise ConfigurationError("stack() needs at least one jet or an explicit space")
        space = jets[0].space

    def _build(item):
        if isinstance(item, (list, tuple)):
            return np.stack([_build(sub) for sub in item])
        if isinstance(item, Jet):
            if item.space is not space:
                raise ConfigurationError("stack() received jets from different spaces")
            return item.coeffs
        coeffs = np.zeros(space.size)
        coeffs[0] = float(item)
        return coeffs

    order = min((j.order for j in jets), default=space.order)
    return Jet(_build(nested), space, order)


# ==================== Derivatives ====================

def require_order(jet: Jet, needed: int, what: str = 'quantity') -> None:
    if jet.order < needed:
        raise OrderError(
            f"{what} needs derivatives of order {needed}, jet only carries order {jet.order}"
        )


def partial(jet: Jet, multi_index: Sequence[int]):
    """
    Partial derivative at the expansion point.

    Raises:
        OrderError: If the total degree exceeds the jet order
    """
    multi_index = tuple(int(p) for p in multi_index)
    if len(multi_index) != jet.space.nvars or min(multi_index) < 0:
        raise ConfigurationError(f"Invalid multi-index {multi_index}")
    degree = sum(multi_index)
    require_order(jet, degree, f"partial derivative {multi_index}")
    slot = jet.space.index[multi_index]
    return jet.coeffs[..., slot] * jet.space.factorials[slot]


def diff(jet: Jet, var: int) -> Jet:
    """Derivative along one chart variable as a jet of one order less."""
    require_order(jet, 1, 'derivative')
    targets, sources, factors = jet.space.diff_maps[var]
    coeffs = np.zeros_like(jet.coeffs)
    coeffs[..., targets] = jet.coeffs[..., sources] * factors
    return Jet(coeffs, jet.space, jet.order - 1)


def gradient(jet: Jet) -> Jet:
    """All first derivatives, stacked on a new leading axis."""
    require_order(jet, 1, 'gradient')
    coeffs = np.stack([diff(jet, v).coeffs for v in range(jet.space.nvars)])
    return Jet(coeffs, jet.space, jet.order - 1)


def antiderivative(jet: Jet, var: int) -> Jet:
    """Primitive along ``var`` vanishing on the hyperplane x_var = x_var(point)."""
    targets, sources, factors = jet.space.diff_maps[var]
    coeffs = np.zeros_like(jet.coeffs)
    coeffs[..., sources] = jet.coeffs[..., targets] / factors
    return Jet(coeffs, jet.space, min(jet.order + 1, jet.space.order))


# ==================== Elementary functions ====================

def _compose(a: Jet, taylor: List[np.ndarray]) -> Jet:
    """f(a) from the normalized Taylor coefficients f^(k)(a0)/k! of f."""
    base = a.value
    nilpotent = a - base
    result = constant(taylor[0], a.space)
    power = None
    for k in range(1, a.order + 1):
        power = nilpotent if power is None else power * nilpotent
        result = result + power * taylor[k]
    return result.with_order(a.order)


def _values(x):
    return np.asarray(x.value if isinstance(x, Jet) else x, dtype=float)


def reciprocal(a: Jet) -> Jet:
    base = _values(a)
    if np.any(base == 0.0):
        raise SingularPointError("Reciprocal of a jet with vanishing constant term")
    taylor = [(-1.0) ** k / base ** (k + 1) for k in range(a.order + 1)]
    return _compose(a, taylor)


def pow_int(a: Jet, n: int) -> Jet:
    if n < 0:
        return reciprocal(pow_int(a, -n))
    result = constant(np.ones(a.shape), a.space).with_order(a.order)
    for _ in range(n):
        result = result * a
    return result


def _binomial(p: float, k: int) -> float:
    value = 1.0
    for j in range(k):
        value *= (p - j) / (j + 1)
    return value


def pow_real(a, p: float):
    base = _values(a)
    if np.any(base <= 0.0):
        raise DomainError(f"Real power {p} of a non-positive value {base}")
    if not isinstance(a, Jet):
        return base ** p
    taylor = [_binomial(p, k) * base ** (p - k) for k in range(a.order + 1)]
    return _compose(a, taylor)


def sqrt(a):
    return pow_real(a, 0.5)


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    e = np.exp(a.value)
    return _compose(a, [e / math.factorial(k) for k in range(a.order + 1)])


def log(a):
    base = _values(a)
    if np.any(base <= 0.0):
        raise DomainError(f"Logarithm of a non-positive value {base}")
    if not isinstance(a, Jet):
        return np.log(base)
    taylor = [np.log(base)]
    taylor += [(-1.0) ** (k + 1) / (k * base ** k) for k in range(1, a.order + 1)]
    return _compose(a, taylor)


def atan(a):
    if not isinstance(a, Jet):
        return np.arctan(a)
    x = a.value
    q = 1.0 + x * x
    derivatives = [
        np.arctan(x),
        1.0 / q,
        -2.0 * x / q ** 2,
        (6.0 * x * x - 2.0) / q ** 3,
        24.0 * x * (1.0 - x * x) / q ** 4,
    ]
    return _compose(a, [derivatives[k] / math.factorial(k) for k in range(a.order + 1)])


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [s, c, -s, -c]
    return _compose(a, [cycle[k % 4] / math.factorial(k) for k in range(a.order + 1)])


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [c, -s, -c, s]
    return _compose(a, [cycle[k % 4] / math.factorial(k) for k in range(a.order + 1)])


_ELEMENTARY = {
    'exp': exp, 'log': log, 'sqrt': sqrt, 'atan': atan, 'sin': sin, 'cos': cos,
}


def elementary(name: str, a, exponent: float = None):
    """
    Apply an elementary function by name.

    Args:
        name: One of exp, log, sqrt, atan, sin, cos, pow_int, pow_real
        a: Jet (or plain number)
        exponent: Required for pow_int / pow_real

    Raises:
        DomainError: log/sqrt/pow_real of a non-positive constant term
        SingularPointError: Negative integer power of a vanishing constant term
    """
    if name == 'pow_int':
        return pow_int(a, int(exponent))
    if name == 'pow_real':
        return pow_real(a, float(exponent))
    if name not in _ELEMENTARY:
        raise ConfigurationError(f"Unknown elementary function '{name}'")
    return _ELEMENTARY[name](a)


def arith(a, b, op: str):
    """Binary arithmetic by name: add, sub, mul, div."""
    if op == 'add':
        return a + b
    if op == 'sub':
        return a - b
    if op == 'mul':
        return a * b
    if op == 'div':
        return a / b
    raise ConfigurationError(f"Unknown arithmetic operation '{op}'")


# ==================== Tensor algebra ====================

def _pair_contract(sub_a: str, a, sub_b: str, b, out: str, space: JetSpace):
    a_is_jet, b_is_jet = isinstance(a, Jet), isinstance(b, Jet)
    if a_is_jet and b_is_jet:
        coeffs = np.einsum(
            f"{sub_a}{_PAIR},{sub_b}{_PAIR}->{out}{_PAIR}",
            a.coeffs[..., space.left], b.coeffs[..., space.right], optimize=True
        )
        return Jet(coeffs @ space.scatter, space, min(a.order, b.order))
    if a_is_jet:
        coeffs = np.einsum(f"{sub_a}{_PAIR},{sub_b}->{out}{_PAIR}", a.coeffs, b, optimize=True)
        return Jet(coeffs, space, a.order)
    if b_is_jet:
        coeffs = np.einsum(f"{sub_a},{sub_b}{_PAIR}->{out}{_PAIR}", a, b.coeffs, optimize=True)
        return Jet(coeffs, space, b.order)
    return np.einsum(f"{sub_a},{sub_b}->{out}", a, b)


def contract(subscripts: str, *operands) -> Jet:
    """
    Einstein summation over tensor indices of jets and constant arrays.

    Lower-case index letters only. Operands are reduced pairwise from the
    left, so put small factors first when chaining several.

    Example:
        >>> ginv_dg = contract('kl,ilj->kij', ginv, dg)
    """
    inputs, output = subscripts.replace(' ', '').split('->')
    terms = inputs.split(',')
    if len(terms) != len(operands):
        raise ConfigurationError(
            f"Subscripts '{subscripts}' name {len(terms)} operands, got {len(operands)}"
        )
    if any(ch.isupper() for ch in subscripts):
        raise ConfigurationError("contract() only accepts lower-case index letters")

    space = next((op.space for op in operands if isinstance(op, Jet)), None)
    if space is None:
        raise ConfigurationError("contract() needs at least one jet operand")
    for op in operands:
        if isinstance(op, Jet) and op.space is not space:
            raise ConfigurationError("contract() received jets from different spaces")

    ops = [op if isinstance(op, Jet) else np.asarray(op, dtype=float) for op in operands]
    current_sub, current = terms[0], ops[0]
    for k in range(1, len(terms)):
        later = ''.join(terms[k + 1:]) + output
        keep = ''.join(ch for ch in dict.fromkeys(current_sub + terms[k]) if ch in later)
        current = _pair_contract(current_sub, current, terms[k], ops[k], keep, space)
        current_sub = keep

    if not isinstance(current, Jet):
        current = constant(current, space)
    if current_sub != output:
        current = Jet(np.einsum(f"{current_sub}{_PAIR}->{output}{_PAIR}", current.coeffs),
                      space, current.order)
    return current


def inverse(matrix: Jet) -> Jet:
    """
    Inverse of a square matrix of jets.

    Uses (M0 + D)^-1 = sum_k (-M0^-1 D)^k M0^-1, which terminates because D
    has no constant term.

    Raises:
        SingularPointError: If the constant matrix is singular
    """
    base = np.asarray(matrix.value)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ConfigurationError(f"inverse() needs a square matrix jet, got shape {base.shape}")
    if np.linalg.cond(base) > 1e14:
        raise SingularPointError(f"Matrix jet is singular at the expansion point (cond={np.linalg.cond(base):.3e})")
    base_inv = np.linalg.inv(base)
    step = -contract('ij,jk->ik', base_inv, matrix - base)
    series = constant(np.eye(base.shape[0]), matrix.space)
    term = series
    for _ in range(matrix.order):
        term = contract('ij,jk->ik', term, step)
        series = series + term
    return contract('ij,jk->ik', series, base_inv).with_order(matrix.order)


def ode_jet(initial: float, rhs: Callable[[Jet], Jet], var: int, order: int = MAX_ORDER) -> Jet:
    """
    Taylor jet in variable ``var`` of the solution of y' = rhs(y), y(0) = initial.

    Each Picard step y <- initial + integral(rhs(y)) fixes one more Taylor
    coefficient, so ``order`` steps give the exact truncated series.
    """
    space = get_space(order)
    y = constant(initial, space)
    for _ in range(order):
        y = initial + antiderivative(rhs(y), var)
    return y.with_order(order)
