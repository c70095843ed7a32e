"""Conic problem description in complex variables and its real symmetric embedding.

A ConicProblem holds real scalars, complex vectors and Hermitian matrices,
each stored as a run of real coordinates x:

- real (n):       x = v
- complex (n):    x = (Re v, Im v)
- hermitian (k):  x = (X_11, ..., X_kk, Re X_12, Im X_12, Re X_13, Im X_13, ...)

so that every variable value is v = sum_k x_k B_k for a fixed complex
basis B_k. Objective, constraints and LMI blocks are all affine or
quadratic in x. The objective is 1/2 x^T P x + q^T x + c.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, TextIO, Tuple

import numpy as np

from src.errors import DomainError
from src.linalg import hermitian_defect, hermitize, min_eigenvalue


class VariableKind(Enum):
    REAL = "real"
    COMPLEX = "complex"
    HERMITIAN = "hermitian"


@dataclass(frozen=True)
class Variable:
    """A named block of coordinates."""

    name: str
    kind: VariableKind
    size: int
    offset: int

    @property
    def n_coords(self) -> int:
        if self.kind is VariableKind.REAL:
            return self.size
        if self.kind is VariableKind.COMPLEX:
            return 2 * self.size
        return self.size * self.size

    @property
    def shape(self) -> Tuple[int, ...]:
        if self.kind is VariableKind.HERMITIAN:
            return (self.size, self.size)
        return (self.size,)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n_coords)

    def basis(self) -> np.ndarray:
        """Complex basis of shape (n_coords, *shape)."""
        n = self.size
        if self.kind is VariableKind.REAL:
            return np.eye(n, dtype=complex)
        if self.kind is VariableKind.COMPLEX:
            eye = np.eye(n, dtype=complex)
            return np.concatenate([eye, 1j * eye], axis=0)
        basis = np.zeros((n * n, n, n), dtype=complex)
        for i in range(n):
            basis[i, i, i] = 1.0
        k = n
        for i in range(n):
            for j in range(i + 1, n):
                basis[k, i, j] = basis[k, j, i] = 1.0
                basis[k + 1, i, j] = 1j
                basis[k + 1, j, i] = -1j
                k += 2
        return basis

    def pack(self, value: np.ndarray) -> np.ndarray:
        """Coordinates of a value of this variable."""
        v = np.asarray(value)
        if v.shape != self.shape:
            raise DomainError(f"{self.name}: expected shape {self.shape}, got {v.shape}")
        if self.kind is VariableKind.REAL:
            return np.real(v).astype(float)
        if self.kind is VariableKind.COMPLEX:
            return np.concatenate([v.real, v.imag]).astype(float)
        upper = np.triu_indices(self.size, k=1)
        pairs = np.stack([v[upper].real, v[upper].imag], axis=1).reshape(-1)
        return np.concatenate([np.real(np.diag(v)), pairs]).astype(float)

    def unpack(self, coords: np.ndarray) -> np.ndarray:
        """Value of this variable from its own coordinates."""
        c = np.asarray(coords, dtype=float)
        if self.kind is VariableKind.REAL:
            return c.copy()
        if self.kind is VariableKind.COMPLEX:
            return c[: self.size] + 1j * c[self.size :]
        n = self.size
        value = np.diag(c[:n]).astype(complex)
        upper = np.triu_indices(n, k=1)
        pairs = c[n:].reshape(-1, 2)
        value[upper] = pairs[:, 0] + 1j * pairs[:, 1]
        value[(upper[1], upper[0])] = pairs[:, 0] - 1j * pairs[:, 1]
        return value


@dataclass
class LinearForm:
    """sum_i coeffs[i] * x[indices[i]]; repeated indices add up."""

    indices: np.ndarray
    coeffs: np.ndarray

    def __add__(self, other: "LinearForm") -> "LinearForm":
        return LinearForm(
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    def __mul__(self, scale: float) -> "LinearForm":
        return LinearForm(self.indices, scale * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearForm":
        return self * -1.0

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        np.add.at(out, self.indices, self.coeffs)
        return out


class LmiBlock:
    """Affine Hermitian matrix F(x) = F_0 + sum_i x_i F_i required to be PSD."""

    def __init__(self, size: int, name: str = "") -> None:
        self.size = size
        self.name = name
        self.constant = np.zeros((size, size), dtype=complex)
        self._terms: List[Tuple[Variable, int, int, float]] = []

    def place(self, var: Variable, row: int, col: int, scale: float = 1.0) -> None:
        """Put a variable at block offset (row, col) and its conjugate transpose at (col, row).

        Vectors are placed as columns. On the diagonal (row == col) the piece
        must be Hermitian, i.e. a Hermitian matrix or a real scalar.
        """
        rows, cols = _piece_shape(var)
        if row + rows > self.size or col + cols > self.size:
            raise DomainError(f"{var.name} does not fit at ({row}, {col}) in a {self.size} block")
        if row == col and not (
            var.kind is VariableKind.HERMITIAN or (var.kind is VariableKind.REAL and var.size == 1)
        ):
            raise DomainError(f"{var.name} cannot sit on the diagonal of an LMI block")
        self._terms.append((var, row, col, scale))

    def place_constant(self, matrix: np.ndarray, row: int, col: int) -> None:
        piece = np.atleast_2d(np.asarray(matrix, dtype=complex))
        r, c = piece.shape
        if row == col:
            if hermitian_defect(piece) > 1e-12:
                raise DomainError("diagonal constant pieces must be Hermitian")
            self.constant[row : row + r, col : col + c] += piece
        else:
            self.constant[row : row + r, col : col + c] += piece
            self.constant[col : col + c, row : row + r] += piece.conj().T

    def coefficients(self) -> Tuple[np.ndarray, np.ndarray]:
        """(indices, F_i) over the coordinates this block touches."""
        touched: Dict[int, np.ndarray] = {}
        for var, row, col, scale in self._terms:
            rows, cols = _piece_shape(var)
            for local, basis in enumerate(var.basis()):
                piece = scale * basis.reshape(rows, cols)
                mat = touched.setdefault(
                    var.offset + local, np.zeros((self.size, self.size), dtype=complex)
                )
                mat[row : row + rows, col : col + cols] += piece
                if row != col:
                    mat[col : col + cols, row : row + rows] += piece.conj().T
        order = sorted(touched)
        if not order:
            return np.zeros(0, dtype=int), np.zeros((0, self.size, self.size), dtype=complex)
        return np.asarray(order, dtype=int), np.stack([touched[i] for i in order])

    def variables(self) -> List[Variable]:
        return [term[0] for term in self._terms]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        idx, mats = self.coefficients()
        return self.constant + np.tensordot(x[idx], mats, axes=1)


def _piece_shape(var: Variable) -> Tuple[int, int]:
    if var.kind is VariableKind.HERMITIAN:
        return var.size, var.size
    return var.size, 1


class ConicProblem:
    """Convex quadratic program over complex variables with LMI constraints.

    Example:
        problem = ConicProblem()
        x = problem.add_real("x")
        lmi = problem.add_lmi(2)
        lmi.place(x, 0, 0)
        lmi.place(x, 1, 1)
        lmi.place_constant(np.array([[1.0]]), 0, 1)
        problem.add_linear(problem.linear_form(x, np.ones(1)))
    """

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.variables: Dict[str, Variable] = {}
        self.constant = 0.0
        self._quadratic: List[Tuple[np.ndarray, np.ndarray]] = []
        self._linear: List[LinearForm] = []
        self._equalities: List[Tuple[LinearForm, float]] = []
        self._inequalities: List[Tuple[LinearForm, float]] = []
        self.lmis: List[LmiBlock] = []
        self._n = 0

    @property
    def n_coords(self) -> int:
        return self._n

    def _add(self, name: str, kind: VariableKind, size: int) -> Variable:
        if name in self.variables:
            raise DomainError(f"variable {name!r} declared twice")
        if size < 1:
            raise DomainError(f"variable {name!r} needs size >= 1")
        var = Variable(name=name, kind=kind, size=size, offset=self._n)
        self.variables[name] = var
        self._n += var.n_coords
        return var

    def add_real(self, name: str, size: int = 1) -> Variable:
        return self._add(name, VariableKind.REAL, size)

    def add_complex(self, name: str, size: int) -> Variable:
        return self._add(name, VariableKind.COMPLEX, size)

    def add_hermitian(self, name: str, size: int) -> Variable:
        return self._add(name, VariableKind.HERMITIAN, size)

    def add_lmi(self, size: int, name: str = "") -> LmiBlock:
        block = LmiBlock(size, name=name or f"lmi{len(self.lmis)}")
        self.lmis.append(block)
        return block

    def linear_form(self, var: Variable, weights: np.ndarray) -> LinearForm:
        """Coefficients of Re<w, v> = Re sum conj(w) * v (Re Tr(W^H X) for matrices)."""
        w = np.asarray(weights, dtype=complex)
        if w.shape != var.shape:
            raise DomainError(f"{var.name}: weights shape {w.shape} != {var.shape}")
        basis = var.basis().reshape(var.n_coords, -1)
        coeffs = np.real(basis @ np.conj(w).reshape(-1))
        return LinearForm(var.indices, coeffs)

    def add_hermitian_quadratic(self, var: Variable, z: np.ndarray) -> None:
        """Add v^H Z v for a complex vector variable and Hermitian PSD Z."""
        if var.kind is not VariableKind.COMPLEX:
            raise DomainError("hermitian quadratic terms need a complex vector variable")
        z = hermitize(np.asarray(z, dtype=complex))
        basis = var.basis()
        self._quadratic.append((var.indices, 2.0 * np.real(np.conj(basis) @ z @ basis.T)))

    def add_square(self, form: LinearForm, weight: float = 1.0, shift: float = 0.0) -> None:
        """Add weight * (form(x) - shift)^2."""
        if weight < 0.0:
            raise DomainError("square terms need a non-negative weight")
        idx, coeffs = _compact(form)
        self._quadratic.append((idx, 2.0 * weight * np.outer(coeffs, coeffs)))
        self._linear.append(LinearForm(idx, -2.0 * weight * shift * coeffs))
        self.constant += weight * shift * shift

    def add_linear(self, form: LinearForm) -> None:
        self._linear.append(form)

    def add_equality(self, form: LinearForm, rhs: float) -> None:
        self._equalities.append((form, float(rhs)))

    def add_inequality(self, form: LinearForm, rhs: float) -> None:
        """form(x) <= rhs."""
        self._inequalities.append((form, float(rhs)))

    def matrices(
        self,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dense (P, q, A, b, G, h)."""
        n = self._n
        p = np.zeros((n, n))
        for idx, block in self._quadratic:
            p[np.ix_(idx, idx)] += block
        q = np.zeros(n)
        for form in self._linear:
            q += form.dense(n)
        a = np.array([form.dense(n) for form, _ in self._equalities]).reshape(-1, n)
        b = np.array([rhs for _, rhs in self._equalities], dtype=float)
        g = np.array([form.dense(n) for form, _ in self._inequalities]).reshape(-1, n)
        h = np.array([rhs for _, rhs in self._inequalities], dtype=float)
        return 0.5 * (p + p.T), q, a, b, g, h

    def validate(self) -> None:
        """Check the objective is convex and every term references declared coordinates."""
        p, *_ = self.matrices()
        scale = max(1.0, float(np.max(np.abs(p)))) if p.size else 1.0
        if p.size and min_eigenvalue(p) < -1e-10 * scale:
            raise DomainError("objective quadratic form is not positive semidefinite")
        forms = self._linear + [f for f, _ in self._equalities] + [f for f, _ in self._inequalities]
        for form in forms:
            if form.indices.size and (form.indices.min() < 0 or form.indices.max() >= self._n):
                raise DomainError("a constraint references an undeclared coordinate")
        declared = set(self.variables.values())
        for block in self.lmis:
            for var in block.variables():
                if var not in declared:
                    raise DomainError(f"LMI {block.name} references undeclared {var.name}")

    def pack(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        """Coordinate vector from variable values (missing variables are zero)."""
        x = np.zeros(self._n)
        for name, value in values.items():
            var = self.variables[name]
            x[var.indices] = var.pack(value)
        return x

    def unpack(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: var.unpack(x[var.indices]) for name, var in self.variables.items()}

    def objective_value(self, x: np.ndarray) -> float:
        p, q, *_ = self.matrices()
        return float(0.5 * x @ p @ x + q @ x + self.constant)


def _compact(form: LinearForm) -> Tuple[np.ndarray, np.ndarray]:
    idx, inverse = np.unique(form.indices, return_inverse=True)
    coeffs = np.zeros(idx.size)
    np.add.at(coeffs, inverse, form.coeffs)
    return idx, coeffs


def embed_hermitian(matrix: np.ndarray) -> np.ndarray:
    """[[Re X, -Im X], [Im X, Re X]]; X >= 0 iff the embedding is >= 0."""
    x = np.asarray(matrix, dtype=complex)
    return np.block([[x.real, -x.imag], [x.imag, x.real]])


def extract_hermitian(matrix: np.ndarray) -> np.ndarray:
    """Inverse of embed_hermitian (averaging the redundant blocks)."""
    r = np.asarray(matrix, dtype=float)
    k = r.shape[0] // 2
    re = 0.5 * (r[:k, :k] + r[k:, k:])
    im = 0.5 * (r[k:, :k] - r[:k, k:])
    return re + 1j * im


@dataclass
class RealLmi:
    """Real symmetric LMI F(x) = f0 + sum_j x[idx[j]] * fi[j] >= 0."""

    idx: np.ndarray
    f0: np.ndarray
    fi: np.ndarray
    name: str = ""

    @property
    def size(self) -> int:
        return int(self.f0.shape[0])

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        value = self.f0 + np.tensordot(x[self.idx], self.fi, axes=1)
        return 0.5 * (value + value.T)

    def direction(self, dx: np.ndarray) -> np.ndarray:
        return np.tensordot(dx[self.idx], self.fi, axes=1)


@dataclass
class RealConicProgram:
    """min 1/2 x^T P x + q^T x + c  s.t.  A x = b,  G x <= h,  F_j(x) >= 0."""

    p: np.ndarray
    q: np.ndarray
    c: float
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    h: np.ndarray
    blocks: List[RealLmi] = field(default_factory=list)
    variables: Dict[str, Variable] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.q.size)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.p @ x + self.q @ x + self.c)

    def unpack(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: var.unpack(x[var.indices]) for name, var in self.variables.items()}


def embed_real(problem: ConicProblem) -> RealConicProgram:
    """Map every complex Hermitian LMI block to its doubled real symmetric embedding."""
    problem.validate()
    p, q, a, b, g, h = problem.matrices()
    blocks = []
    for lmi in problem.lmis:
        idx, mats = lmi.coefficients()
        fi = np.stack([embed_hermitian(m) for m in mats]) if idx.size else np.zeros(
            (0, 2 * lmi.size, 2 * lmi.size)
        )
        blocks.append(RealLmi(idx=idx, f0=embed_hermitian(lmi.constant), fi=fi, name=lmi.name))
    return RealConicProgram(
        p=p,
        q=q,
        c=problem.constant,
        a=a,
        b=b,
        g=g,
        h=h,
        blocks=blocks,
        variables=dict(problem.variables),
    )


def extract(program: RealConicProgram, x: np.ndarray) -> Dict[str, np.ndarray]:
    """Variable values of a real solution vector."""
    return program.unpack(x)


def dump_program(program: RealConicProgram, stream: TextIO, title: str = "") -> None:
    """Write a self-describing text form: sparse triplets for linear maps, dense LMI blocks."""

    def triplets(matrix: np.ndarray) -> List[Tuple[int, int, float]]:
        rows, cols = np.nonzero(matrix)
        return [(int(i), int(j), float(matrix[i, j])) for i, j in zip(rows, cols)]

    def write_sparse(label: str, matrix: np.ndarray) -> None:
        entries = triplets(np.atleast_2d(matrix))
        stream.write(f"{label} {matrix.shape[0]} {matrix.shape[-1]} {len(entries)}\n")
        for i, j, v in entries:
            stream.write(f"{i} {j} {v:.17g}\n")

    stream.write("# conic program: min 1/2 x'Px + q'x + c s.t. Ax = b, Gx <= h, F_j(x) >= 0\n")
    if title:
        stream.write(f"# {title}\n")
    stream.write(f"n {program.n}\n")
    stream.write(f"variables {len(program.variables)}\n")
    for var in program.variables.values():
        stream.write(f"{var.name} {var.kind.value} {var.size} {var.offset}\n")
    write_sparse("P", program.p)
    write_sparse("q", program.q.reshape(1, -1))
    stream.write(f"c {program.c:.17g}\n")
    write_sparse("A", program.a.reshape(-1, program.n))
    write_sparse("b", program.b.reshape(1, -1))
    write_sparse("G", program.g.reshape(-1, program.n))
    write_sparse("h", program.h.reshape(1, -1))
    stream.write(f"lmis {len(program.blocks)}\n")
    for block in program.blocks:
        stream.write(f"lmi {block.name or '-'} {block.size} {block.idx.size}\n")
        for label, mat in [("F0", block.f0)] + [
            (f"F {int(i)}", m) for i, m in zip(block.idx, block.fi)
        ]:
            stream.write(f"{label}\n")
            for row in mat:
                stream.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_program(stream: TextIO) -> RealConicProgram:
    """Read a program written by dump_program."""
    lines = [ln for ln in (raw.strip() for raw in stream) if ln and not ln.startswith("#")]
    pos = 0

    def take() -> List[str]:
        nonlocal pos
        pos += 1
        return lines[pos - 1].split()

    def read_sparse(expected: str) -> np.ndarray:
        label, rows, cols, nnz = take()
        if label != expected:
            raise DomainError(f"expected section {expected}, found {label}")
        out = np.zeros((int(rows), int(cols)))
        for _ in range(int(nnz)):
            i, j, v = take()
            out[int(i), int(j)] = float(v)
        return out

    n = int(take()[1])
    variables: Dict[str, Variable] = {}
    for _ in range(int(take()[1])):
        name, kind, size, offset = take()
        variables[name] = Variable(name, VariableKind(kind), int(size), int(offset))
    p = read_sparse("P")
    q = read_sparse("q").reshape(-1)
    c = float(take()[1])
    a = read_sparse("A").reshape(-1, n)
    b = read_sparse("b").reshape(-1)
    g = read_sparse("G").reshape(-1, n)
    h = read_sparse("h").reshape(-1)
    blocks: List[RealLmi] = []
    for _ in range(int(take()[1])):
        _, name, size, count = take()
        k = int(size)

        def read_dense() -> np.ndarray:
            return np.array([[float(v) for v in take()] for _ in range(k)])

        take()  # F0
        f0 = read_dense()
        idx, mats = [], []
        for _ in range(int(count)):
            idx.append(int(take()[1]))
            mats.append(read_dense())
        fi = np.stack(mats) if mats else np.zeros((0, k, k))
        blocks.append(
            RealLmi(idx=np.asarray(idx, dtype=int), f0=f0, fi=fi, name="" if name == "-" else name)
        )
    return RealConicProgram(p=p, q=q, c=c, a=a, b=b, g=g, h=h, blocks=blocks, variables=variables)

