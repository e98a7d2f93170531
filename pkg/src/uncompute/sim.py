"""Dense statevector oracle.

Measurement is not sampled: every outcome becomes a separate branch of an
ensemble, so reduced states after a measurement are exact mixtures.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import ir
from .ir import Program

QUBIT_BUDGET = 12
DEFAULT_SEED = 1234
RANDOM_INPUTS = 16
EQUIV_TOL = 1e-9
RESTORE_TOL = 1e-12

_S = np.diag([1, 1j])
_T = np.diag([1, np.exp(1j * np.pi / 4)])
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _controlled(u: np.ndarray, controls: int) -> np.ndarray:
    dim = 2 ** (controls + 1)
    m = np.eye(dim, dtype=complex)
    m[dim - 2:, dim - 2:] = u
    return m


_SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
MATRICES = {
    "X": _X, "H": _H, "S": _S, "T": _T,
    "CX": _controlled(_X, 1), "CCX": _controlled(_X, 2), "SWAP": _SWAP,
}


class BudgetExceeded(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


def gate_matrix(op: ir.Operation) -> np.ndarray:
    if op.gate_name not in MATRICES:
        raise SimulationError(f"unresolved opaque call {op.gate_name!r}")
    m = MATRICES[op.gate_name]
    return m.conj().T if op.kind == ir.ADJOINT_GATE else m


@dataclass
class StateVector:
    """Amplitudes as an ``m``-axis tensor; ``axis`` maps resource ids to
    qubit indices (several resources may share one index over time)."""
    amplitudes: np.ndarray
    axis: Mapping[int, int]

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.ndim

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def flat(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.axis)


@dataclass
class Branch:
    probability: float
    state: StateVector
    outcomes: tuple[tuple[int, int], ...] = ()   # (point, bit)


@dataclass
class Ensemble:
    branches: list[Branch]

    @property
    def axis(self) -> Mapping[int, int]:
        return self.branches[0].state.axis


def apply_matrix(psi: np.ndarray, m: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    u = m.reshape((2,) * (2 * k))
    out = np.tensordot(u, psi, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _project(psi: np.ndarray, axis: int, bit: int) -> np.ndarray:
    out = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[axis] = 1 - bit
    out[tuple(idx)] = 0
    return out


def qubit_axes(program: Program, regmap=None) -> dict[int, int]:
    """Axis of every resource the simulation has to hold."""
    needed = {r for op in program.operations for r in op.resources}
    needed |= {r.id for r in program.resources.values() if not r.is_temporary}
    if regmap is not None:
        axis = {r: regmap.qubit[r] for r in needed if r in regmap.qubit}
        # callee locals created by inlining get qubits of their own
        nxt = max(axis.values(), default=-1) + 1
        for r in sorted(needed - set(axis)):
            axis[r] = nxt
            nxt += 1
        return axis
    return {r: i for i, r in enumerate(sorted(needed))}


def initial_state(axis: Mapping[int, int], inputs: Mapping[int, object]) -> StateVector:
    """Product state; each resource in ``inputs`` gets a bit or a
    2-amplitude vector, everything else starts in |0>."""
    m = max(axis.values(), default=-1) + 1
    if m > QUBIT_BUDGET:
        raise BudgetExceeded(f"{m} qubits exceed the budget of {QUBIT_BUDGET}")
    per_axis = [np.array([1, 0], dtype=complex) for _ in range(m)]
    for rid, val in inputs.items():
        if rid not in axis:
            continue
        if isinstance(val, (int, np.integer)):
            vec = np.zeros(2, dtype=complex)
            vec[int(val)] = 1
        else:
            vec = np.asarray(val, dtype=complex)
            vec = vec / np.linalg.norm(vec)
        per_axis[axis[rid]] = vec
    psi = np.array(1, dtype=complex)
    for vec in per_axis:
        psi = np.multiply.outer(psi, vec)
    return StateVector(psi.reshape((2,) * m) if m else psi, dict(axis))


def simulate(program: Program, inputs: Mapping[int, object] | None = None, regmap=None,
             snapshots: Iterable[int] = ()) -> tuple[Ensemble, dict[int, Ensemble]]:
    """Run ``program`` (inlined on the fly) and return the final ensemble plus
    copies taken after each point in ``snapshots`` (0 = before the first
    operation).  Snapshot points refer to the inlined numbering."""
    if not ir.is_inlined(program):
        program = ir.inline(program)[0]
    axis = qubit_axes(program, regmap)
    start = initial_state(axis, inputs or {})
    branches = [Branch(1.0, start)]
    want = set(snapshots)
    taken: dict[int, Ensemble] = {}

    def snap(p):
        if p in want:
            taken[p] = Ensemble([Branch(b.probability, b.state.copy(), b.outcomes) for b in branches])

    snap(0)
    for op in program.operations:
        axes = [axis[r] for r in op.resources]
        if op.kind == ir.MEASURE:
            nxt = []
            for b in branches:
                for bit in (0, 1):
                    psi = _project(b.state.amplitudes, axes[0], bit)
                    pr = float(np.vdot(psi, psi).real)
                    if pr > 1e-15:
                        nxt.append(Branch(b.probability * pr, StateVector(psi / np.sqrt(pr), axis),
                                          b.outcomes + ((op.point, bit),)))
            branches = nxt
        else:
            if len(set(axes)) != len(axes):
                raise SimulationError(f"point {op.point} maps two operands to one qubit")
            m = gate_matrix(op)
            for b in branches:
                b.state = StateVector(apply_matrix(b.state.amplitudes, m, axes), axis)
        snap(op.point)
    return Ensemble(branches), taken


@dataclass(frozen=True)
class ReducedState:
    rho: np.ndarray
    resources: tuple[int, ...]

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    @property
    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    @property
    def zero_population(self) -> float:
        return float(self.rho[0, 0].real)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.rho, self.rho.conj().T, atol=tol))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2).min())


def _pure_reduced(psi: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    moved = np.moveaxis(psi, list(axes), list(range(k)))
    mat = moved.reshape(2 ** k, -1)
    return mat @ mat.conj().T


def reduced_state(state: StateVector | Ensemble, subset: Sequence[int]) -> ReducedState:
    """Partial trace onto ``subset`` (resource ids, in the given order)."""
    branches = state.branches if isinstance(state, Ensemble) else [Branch(1.0, state)]
    axis = branches[0].state.axis
    for r in subset:
        if r not in axis:
            raise SimulationError(f"resource {r} is not held in this state")
    axes = [axis[r] for r in subset]
    if len(set(axes)) != len(axes):
        raise SimulationError("subset maps two resources to one qubit")
    k = len(axes)
    rho = np.zeros((2 ** k, 2 ** k), dtype=complex)
    for b in branches:
        rho += b.probability * _pure_reduced(b.state.amplitudes, axes)
    return ReducedState(rho, tuple(subset))


def trace_distance(a: ReducedState | np.ndarray, b: ReducedState | np.ndarray) -> float:
    ra = a.rho if isinstance(a, ReducedState) else a
    rb = b.rho if isinstance(b, ReducedState) else b
    diff = ra - rb
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def random_product_state(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def input_resources(program: Program) -> list[int]:
    return sorted(r.id for r in program.resources.values() if not r.is_temporary)


def sample_inputs(resources: Sequence[int], seed: int = DEFAULT_SEED,
                  n_random: int = RANDOM_INPUTS, basis: bool = True) -> list[tuple[str, dict[int, object]]]:
    """All basis assignments over ``resources`` followed by ``n_random``
    seeded random product states."""
    out: list[tuple[str, dict[int, object]]] = []
    if basis:
        for bits in itertools.product((0, 1), repeat=len(resources)):
            out.append(("basis:" + "".join(map(str, bits)), dict(zip(resources, bits))))
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        out.append((f"random:{i}", {r: random_product_state(rng) for r in resources}))
    return out


@dataclass
class Report:
    check: str
    inputs: int
    passed: bool
    max_trace_distance: float | None = None
    min_zero_population: float | None = None
    min_purity: float | None = None
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"check": self.check, "inputs": self.inputs, "pass": self.passed}
        if self.max_trace_distance is not None:
            out["max_trace_distance"] = self.max_trace_distance
        if self.min_zero_population is not None:
            out["min_zero_population"] = self.min_zero_population
            out["min_purity"] = self.min_purity
        if self.failures:
            out["failures"] = self.failures[:10]
        return out


def verify_equivalence(p1: Program, p2: Program, observed: Sequence[int], seed: int = DEFAULT_SEED,
                       inputs: list | None = None, regmap1=None, regmap2=None) -> Report:
    """Largest trace distance between the reduced states of ``observed``."""
    for r in observed:
        if r not in p1.resources or r not in p2.resources:
            raise SimulationError(f"observed resource {r} missing from a program")
    inputs = inputs if inputs is not None else sample_inputs(input_resources(p1), seed)
    worst = 0.0
    bad = []
    for label, assignment in inputs:
        a, _ = simulate(p1, assignment, regmap1)
        b, _ = simulate(p2, assignment, regmap2)
        d = trace_distance(reduced_state(a, observed), reduced_state(b, observed))
        if d > EQUIV_TOL:
            bad.append(f"{label}: {d:.3e}")
        worst = max(worst, d)
    return Report("equivalence", len(inputs), worst <= EQUIV_TOL, max_trace_distance=worst, failures=bad)


def release_points(program: Program, temps: Sequence[int]) -> dict[int, int]:
    """Point (in inlined numbering) after which each temp must be clean."""
    flat = program if ir.is_inlined(program) else ir.inline(program)[0]
    return {t: flat.releases.get(t, flat.n) for t in temps}


def restoration_metrics(program: Program, temps: Sequence[int], assignment, regmap=None) -> dict[int, tuple[float, float]]:
    points = release_points(program, temps)
    _, snaps = simulate(program, assignment, regmap, snapshots=set(points.values()))
    out = {}
    for t, p in points.items():
        ens = snaps[p]
        if t not in ens.axis:
            out[t] = (1.0, 1.0)
            continue
        red = reduced_state(ens, [t])
        out[t] = (red.zero_population, red.purity)
    return out


def verify_restoration(program: Program, temps: Sequence[int], seed: int = DEFAULT_SEED,
                       inputs: list | None = None, regmap=None) -> Report:
    """Each temp must be |0> and unentangled right after its release point."""
    inputs = inputs if inputs is not None else sample_inputs(input_resources(program), seed)
    min_pop, min_pur = 1.0, 1.0
    bad = []
    for label, assignment in inputs:
        for t, (pop, pur) in restoration_metrics(program, temps, assignment, regmap).items():
            min_pop, min_pur = min(min_pop, pop), min(min_pur, pur)
            if pop < 1 - RESTORE_TOL or pur < 1 - RESTORE_TOL:
                bad.append(f"{label}: {program.resources[t].name} pop0={pop:.6f} purity={pur:.6f}")
    passed = min_pop >= 1 - RESTORE_TOL and min_pur >= 1 - RESTORE_TOL
    return Report("restoration", len(inputs), passed, min_zero_population=min_pop, min_purity=min_pur,
                  failures=bad)


def violation(original: Program, candidate: Program, observed: Sequence[int], temps: Sequence[int],
              seed: int = DEFAULT_SEED) -> float:
    """Worst of output drift, missing |0> population and lost purity."""
    eq = verify_equivalence(original, candidate, observed, seed)
    rs = verify_restoration(candidate, temps, seed)
    return max(eq.max_trace_distance, 1 - rs.min_zero_population, 1 - rs.min_purity)


def persistent_resources(program: Program) -> list[int]:
    return sorted(r.id for r in program.resources.values() if r.persistent)
