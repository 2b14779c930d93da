"""Finite fields GF(2^n) and full-length Reed-Solomon erasure codes.

Field elements are integers in [0, 2^n); bit i is the coefficient of x^i of
the residue polynomial.  Addition is XOR, multiplication is carry-less
polynomial multiplication reduced by the field's irreducible polynomial.

The Reed-Solomon codes are evaluation codes of length exactly q = 2^n: a
message of ``dimension`` symbols is interpreted as the coefficients of a
polynomial of degree < dimension, which is evaluated at all q field points
enumerated by integer value 0, 1, ..., q-1.  Evaluating at every point
(including 0) keeps the code MDS at length q for any dimension, which the
staircase construction needs.  Erasure decoding interpolates through any
``dimension`` unerased positions, O(q^2) symbol operations.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodingError, UnrecoverableErasure

# One irreducible (primitive) reduction polynomial per extension degree.
# Overridable at GfField construction for reproducibility experiments.
DEFAULT_REDUCTION_POLYS = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,            # x^4 + x + 1
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,        # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}

MAX_DEGREE = 16


def _clmul(a: int, b: int) -> int:
    """Carry-less (GF(2)[x]) product of two polynomial bit masks."""
    res = 0
    while b:
        if b & 1:
            res ^= a
        a <<= 1
        b >>= 1
    return res


def _poly_deg(p: int) -> int:
    return p.bit_length() - 1


def _poly_mod(a: int, p: int) -> int:
    """Remainder of a modulo p in GF(2)[x]."""
    dp = _poly_deg(p)
    while _poly_deg(a) >= dp and a:
        a ^= p << (_poly_deg(a) - dp)
    return a


def _is_irreducible(p: int, n: int) -> bool:
    """Exhaustive divisor check; fine for n <= 16."""
    if _poly_deg(p) != n:
        return False
    for k in range(1, n // 2 + 1):
        for d in range(1 << k, 1 << (k + 1)):
            if _poly_mod(p, d) == 0 and _poly_deg(d) >= 1:
                return False
    return True


class GfField:
    """The finite field GF(2^n) under a fixed reduction polynomial.

    Parameters
    ----------
    n : int
        Extension degree, 1 <= n <= 16.  Field order is q = 2^n.
    reduction_poly : int, optional
        (n+1)-bit mask of an irreducible degree-n polynomial over GF(2).
        Defaults to a built-in table entry.  Validated exhaustively.
    """

    def __init__(self, n: int, reduction_poly: int | None = None):
        if not 1 <= n <= MAX_DEGREE:
            raise ValueError(f"extension degree must be in [1, {MAX_DEGREE}], got {n}")
        if reduction_poly is None:
            reduction_poly = DEFAULT_REDUCTION_POLYS[n]
        if not _is_irreducible(reduction_poly, n):
            raise ValueError(
                f"reduction polynomial {reduction_poly:#x} is not irreducible of degree {n}"
            )
        self.n = n
        self.reduction_poly = reduction_poly
        self.order = 1 << n
        self._build_tables()

    def _build_tables(self):
        q = self.order
        if q == 2:
            # GF(2): trivial tables.
            self._exp = np.array([1], dtype=np.int64)
            self._log = np.array([0, 0], dtype=np.int64)
            return
        # Find a multiplicative generator (x itself when the polynomial is
        # primitive, which all table defaults are).
        for g in range(2, q):
            seen = 0
            elem = 1
            exp = np.empty(q - 1, dtype=np.int64)
            for i in range(q - 1):
                exp[i] = elem
                elem = self._mul_slow(elem, g)
                seen += 1
                if elem == 1:
                    break
            if seen == q - 1:
                self._exp = exp
                log = np.zeros(q, dtype=np.int64)
                log[exp] = np.arange(q - 1)
                self._log = log
                return
        raise AssertionError("no generator found; field tables are broken")

    def _mul_slow(self, a: int, b: int) -> int:
        return _poly_mod(_clmul(a, b), self.reduction_poly)

    # -- scalar arithmetic ------------------------------------------------

    def check(self, v: int) -> int:
        if not 0 <= v < self.order:
            raise ValueError(f"{v} is not an element of GF(2^{self.n})")
        return v

    def add(self, a: int, b: int) -> int:
        return self.check(a) ^ self.check(b)

    def mul(self, a: int, b: int) -> int:
        self.check(a), self.check(b)
        if a == 0 or b == 0:
            return 0
        return int(self._exp[(self._log[a] + self._log[b]) % (self.order - 1)])

    def inv(self, a: int) -> int:
        if self.check(a) == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return int(self._exp[(-self._log[a]) % (self.order - 1)])

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        if self.check(a) == 0:
            return 1 if e == 0 else 0
        return int(self._exp[(self._log[a] * e) % (self.order - 1)])

    # -- vectorized arithmetic on integer ndarrays ------------------------

    def mul_vec(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        out = self._exp[(self._log[a] + self._log[b]) % (self.order - 1)]
        return np.where((a == 0) | (b == 0), 0, out)

    def matmul(self, m, x):
        """GF matrix product m @ x with XOR accumulation.

        m: (r, k) int array, x: (k, ...) int array -> (r, ...).
        """
        m = np.asarray(m, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        prods = self.mul_vec(m[:, :, np.newaxis], x[np.newaxis, :, :])
        return np.bitwise_xor.reduce(prods, axis=1)

    def element(self, value: int) -> "GfElement":
        return GfElement(self.check(value), self)

    def __eq__(self, other):
        return (
            isinstance(other, GfField)
            and self.n == other.n
            and self.reduction_poly == other.reduction_poly
        )

    def __hash__(self):
        return hash((self.n, self.reduction_poly))

    def __repr__(self):
        return f"GfField(n={self.n}, reduction_poly={self.reduction_poly:#x})"


class GfElement:
    """A value of a specific GfField, with operator sugar."""

    __slots__ = ("value", "field")

    def __init__(self, value: int, field: GfField):
        self.value = field.check(int(value))
        self.field = field

    def _coerce(self, other) -> int:
        if isinstance(other, GfElement):
            if other.field != self.field:
                raise ValueError("operands belong to different fields")
            return other.value
        return self.field.check(int(other))

    def __add__(self, other):
        return GfElement(self.value ^ self._coerce(other), self.field)

    __sub__ = __add__
    __radd__ = __add__

    def __mul__(self, other):
        return GfElement(self.field.mul(self.value, self._coerce(other)), self.field)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GfElement(self.field.div(self.value, self._coerce(other)), self.field)

    def __pow__(self, e):
        return GfElement(self.field.pow(self.value, e), self.field)

    def __eq__(self, other):
        if isinstance(other, GfElement):
            return self.field == other.field and self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash((self.value, self.field))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"GfElement({self.value}, GF(2^{self.field.n}))"


def _as_symbol(v, field: GfField) -> int:
    if isinstance(v, GfElement):
        if v.field != field:
            raise ValueError("element belongs to a different field")
        return v.value
    return field.check(int(v))


def gf_mul(a, b, field: GfField) -> GfElement:
    """Product of two elements of ``field``; raises if an operand belongs
    to a different field."""
    return field.element(field.mul(_as_symbol(a, field), _as_symbol(b, field)))


class RsCode:
    """Full-length Reed-Solomon evaluation code over GF(2^n).

    Length is always q = 2^n (evaluation at every field point in integer
    order); ``dimension`` may be anything in [0, q].  The code is MDS:
    any ``dimension`` unerased positions determine the codeword.
    """

    def __init__(self, field: GfField, dimension: int):
        if not 0 <= dimension <= field.order:
            raise ValueError(
                f"dimension must be in [0, {field.order}], got {dimension}"
            )
        self.field = field
        self.dimension = dimension
        self._eval_matrix = self._build_eval_matrix()
        self._fill_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def length(self) -> int:
        return self.field.order

    def _build_eval_matrix(self) -> np.ndarray:
        # V[x, j] = x^j, so codeword = V @ coeffs.  0^0 = 1 (constant term).
        q, k = self.field.order, self.dimension
        v = np.zeros((q, k), dtype=np.int64)
        if k > 0:
            v[:, 0] = 1
        for j in range(1, k):
            v[:, j] = self.field.mul_vec(v[:, j - 1], np.arange(q))
        return v

    def encode(self, message) -> np.ndarray:
        """Evaluate the message polynomial at all q field points.

        ``message`` is a sequence of ``dimension`` symbols (ints or
        GfElements); returns a length-q int array.
        """
        syms = [_as_symbol(m, self.field) for m in message]
        if len(syms) != self.dimension:
            raise ValueError(
                f"message must have {self.dimension} symbols, got {len(syms)}"
            )
        if self.dimension == 0:
            return np.zeros(self.length, dtype=np.int64)
        return self.field.matmul(self._eval_matrix, np.asarray(syms)[:, None])[:, 0]

    def encode_batch(self, messages: np.ndarray) -> np.ndarray:
        """Encode ``messages`` of shape (B, dimension) to shape (B, q)."""
        messages = np.asarray(messages, dtype=np.int64)
        if messages.ndim != 2 or messages.shape[1] != self.dimension:
            raise ValueError("messages must have shape (B, dimension)")
        if self.dimension == 0:
            return np.zeros((messages.shape[0], self.length), dtype=np.int64)
        return self.field.matmul(self._eval_matrix, messages.T).T

    def _solve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Solve a @ x = b over the field by Gaussian elimination."""
        f = self.field
        a = a.copy()
        b = b.copy()
        m = a.shape[0]
        for col in range(m):
            piv = col + int(np.argmax(a[col:, col] != 0))
            if a[piv, col] == 0:
                raise DecodingError("singular interpolation system")
            if piv != col:
                a[[col, piv]] = a[[piv, col]]
                b[[col, piv]] = b[[piv, col]]
            inv = f.inv(int(a[col, col]))
            a[col] = f.mul_vec(a[col], inv)
            b[col] = f.mul_vec(b[col], inv)
            mask = (a[:, col] != 0) & (np.arange(m) != col)
            if mask.any():
                factors = a[mask, col][:, None]
                a[mask] ^= f.mul_vec(factors, a[col][None, :])
                b[mask] ^= f.mul_vec(factors, b[col][None, :])
        return b

    def fill_matrices(self, support) -> tuple[np.ndarray, np.ndarray]:
        """Linear maps recovering (message, codeword) from the symbols at
        ``support`` (a sorted tuple of exactly ``dimension`` positions).

        Returns (msg_map, fill_map) with shapes (dimension, dimension) and
        (q, dimension): message = msg_map @ y_support, codeword =
        fill_map @ y_support over the field.  Cached per support.
        """
        key = tuple(int(s) for s in support)
        if len(key) != self.dimension:
            raise ValueError("support size must equal the code dimension")
        cached = self._fill_cache.get(key)
        if cached is not None:
            return cached
        sub = self._eval_matrix[list(key), :]
        msg_map = self._solve(sub, np.eye(self.dimension, dtype=np.int64))
        fill_map = self.field.matmul(self._eval_matrix, msg_map)
        self._fill_cache[key] = (msg_map, fill_map)
        return msg_map, fill_map

    def erasure_decode(self, received) -> tuple[np.ndarray, np.ndarray]:
        """Recover (message, filled codeword) from a length-q sequence with
        ``None`` marking erased positions.

        Raises UnrecoverableErasure if fewer than ``dimension`` positions
        are unerased, DecodingError if the unerased symbols are not
        consistent with any codeword.
        """
        if len(received) != self.length:
            raise ValueError(f"received word must have length {self.length}")
        vals = np.zeros(self.length, dtype=np.int64)
        known = np.zeros(self.length, dtype=bool)
        for i, r in enumerate(received):
            if r is not None:
                vals[i] = _as_symbol(r, self.field)
                known[i] = True
        n_known = int(known.sum())
        if n_known < self.dimension:
            raise UnrecoverableErasure(
                f"{n_known} unerased symbols < dimension {self.dimension}"
            )
        support = tuple(np.flatnonzero(known)[: self.dimension])
        msg_map, fill_map = self.fill_matrices(support)
        y = vals[list(support)]
        message = self.field.matmul(msg_map, y[:, None])[:, 0]
        codeword = self.field.matmul(fill_map, y[:, None])[:, 0]
        if not np.array_equal(codeword[known], vals[known]):
            raise DecodingError("unerased symbols are inconsistent with the code")
        return message, codeword
