"""Mass-action chemical reaction networks and their steady-state systems.

A network is read from a small line-oriented text format::

    # comment
    species E S ES P
    reaction 1.0  : E + S -> ES
    reaction 0.5  : ES -> E + S
    reaction 0.1  : ES -> E + P
    reaction 1e-3 : P ->
    conc E 1.0
    conc S 10
    moiety 1 1.0

Reactions have at most two reactant units (``A + B`` or ``2 A``).  Conservation
laws are computed exactly over the rationals, and the steady state on a
stoichiometric compatibility class is posed as a square root-finding problem
on the nonnegative orthant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .problem import RootProblem
from .projector import BoxDomain

__all__ = [
    "NetworkParseError", "NotWeaklyElementedError", "SamplingError",
    "Reaction", "CrnNetwork", "ConservationBasis", "SteadyStateTarget",
    "parse_network", "load_network", "parse_directives", "fluxes", "flux_jacobian",
    "species_rhs", "species_rhs_jacobian", "conservation_basis", "steady_state_problem",
    "SccSampler", "sample_on_scc", "make_target",
]


class NetworkParseError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class NotWeaklyElementedError(ValueError):
    """No nonnegative integer conservation basis of the form [I, N2] exists."""


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Reaction:
    """One irreversible mass-action reaction.

    `reactants` and `products` are tuples of ``(species_index, multiplicity)``
    sorted by index.
    """

    reactants: tuple
    products: tuple
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate constant must be positive and finite, got {self.rate}")
        units = sum(m for _, m in self.reactants)
        if units < 1 or units > 2:
            raise ValueError(f"reactions need one or two reactant units, got {units}")

    @property
    def order(self) -> int:
        return sum(m for _, m in self.reactants)


@dataclass(frozen=True)
class CrnNetwork:
    species: tuple
    reactions: tuple
    # optional data carried by the network file
    initial: Optional[Mapping[str, float]] = None
    moieties: Mapping[int, float] = field(default_factory=dict)
    S: np.ndarray = field(init=False, repr=False, compare=False)
    rates: np.ndarray = field(init=False, repr=False, compare=False)
    _r1: np.ndarray = field(init=False, repr=False, compare=False)
    _r2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n, r = len(self.species), len(self.reactions)
        if n == 0 or r == 0:
            raise ValueError("a network needs at least one species and one reaction")
        if len(set(self.species)) != n:
            raise ValueError("species names must be unique")
        S = np.zeros((n, r), dtype=np.int64)
        # reactant slots; index n points at a padding entry equal to 1
        r1 = np.full(r, n, dtype=np.intp)
        r2 = np.full(r, n, dtype=np.intp)
        for j, rx in enumerate(self.reactions):
            slots = []
            for i, m in rx.reactants:
                if not 0 <= i < n:
                    raise ValueError(f"reaction {j} references species index {i}")
                S[i, j] -= m
                slots += [i] * m
            for i, m in rx.products:
                if not 0 <= i < n:
                    raise ValueError(f"reaction {j} references species index {i}")
                S[i, j] += m
            r1[j] = slots[0]
            if len(slots) == 2:
                r2[j] = slots[1]
        for name, arr in (("S", S), ("_r1", r1), ("_r2", r2),
                          ("rates", np.array([rx.rate for rx in self.reactions], dtype=float))):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def index(self, name: str) -> int:
        return self.species.index(name)

    def initial_state(self) -> Optional[np.ndarray]:
        if self.initial is None:
            return None
        return state_vector(self, self.initial)


def state_vector(net: CrnNetwork, conc: Mapping[str, float]) -> np.ndarray:
    x = np.zeros(net.n_species)
    for name, v in conc.items():
        if name not in net.species:
            raise ValueError(f"unknown species {name!r}")
        x[net.index(name)] = v
    return x


# --- parsing -----------------------------------------------------------------

_NAME = r"[A-Za-z0-9_]+"
_TERM = re.compile(rf"^(?:(\d+)\s+)?({_NAME})$")
_NAME_RE = re.compile(rf"^{_NAME}$")


def _number(tok, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise NetworkParseError(f"invalid {what} {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise NetworkParseError(f"{what} must be finite", lineno)
    return v


def _terms(side, lineno):
    side = side.strip()
    if not side:
        return []
    out = []
    for raw in side.split("+"):
        m = _TERM.match(raw.strip())
        if m is None:
            raise NetworkParseError(f"malformed term {raw.strip()!r}", lineno)
        coef = int(m.group(1)) if m.group(1) else 1
        if coef < 1:
            raise NetworkParseError(f"coefficient must be positive in {raw.strip()!r}", lineno)
        out.append((m.group(2), coef))
    return out


def parse_directives(text: str):
    """Split a network-format text into its directives.

    Returns ``(species_lines, reactions, conc, moieties)`` where species and
    reactions keep their line numbers.  Used for network files and for the
    separate state / moiety files of the command line tool.
    """
    declared = []
    reactions = []
    conc = []
    moieties = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "species":
            names = rest.split()
            if not names:
                raise NetworkParseError("species line lists no names", lineno)
            for nm in names:
                if not _NAME_RE.match(nm):
                    raise NetworkParseError(f"invalid species name {nm!r}", lineno)
                declared.append((nm, lineno))
        elif head == "reaction":
            rate_tok, colon, eq = rest.partition(":")
            if not colon:
                raise NetworkParseError("expected 'reaction <rate> : <lhs> -> <rhs>'", lineno)
            rate = _number(rate_tok.strip(), lineno, "rate")
            if rate <= 0:
                raise NetworkParseError(f"rate constant must be positive, got {rate}", lineno)
            lhs, arrow, rhs = eq.partition("->")
            if not arrow:
                raise NetworkParseError("missing '->'", lineno)
            left, right = _terms(lhs, lineno), _terms(rhs, lineno)
            if not left:
                raise NetworkParseError("reaction has no reactants", lineno)
            if sum(c for _, c in left) > 2:
                raise NetworkParseError("more than two reactant units", lineno)
            reactions.append((left, right, rate, lineno))
        elif head == "conc":
            toks = rest.split()
            if len(toks) != 2 or not _NAME_RE.match(toks[0]):
                raise NetworkParseError("expected 'conc <name> <value>'", lineno)
            v = _number(toks[1], lineno, "concentration")
            if v < 0:
                raise NetworkParseError(f"negative concentration for {toks[0]}", lineno)
            conc.append((toks[0], v, lineno))
        elif head == "moiety":
            toks = rest.split()
            if len(toks) != 2 or not toks[0].isdigit() or int(toks[0]) < 1:
                raise NetworkParseError("expected 'moiety <index>=1,2,... <value>'", lineno)
            moieties[int(toks[0])] = _number(toks[1], lineno, "moiety total")
        else:
            raise NetworkParseError(f"unknown directive {head!r}", lineno)
    return declared, reactions, conc, moieties


def parse_network(text: str) -> CrnNetwork:
    declared, raw_reactions, conc, moieties = parse_directives(text)
    if declared:
        species = []
        for nm, lineno in declared:
            if nm in species:
                raise NetworkParseError(f"species {nm!r} declared twice", lineno)
            species.append(nm)
    else:
        species = []
        for left, right, _, _ in raw_reactions:
            for nm, _ in left + right:
                if nm not in species:
                    species.append(nm)
    index = {nm: i for i, nm in enumerate(species)}

    def resolve(terms, lineno):
        acc = {}
        for nm, c in terms:
            if nm not in index:
                raise NetworkParseError(f"unknown species {nm!r}", lineno)
            acc[index[nm]] = acc.get(index[nm], 0) + c
        return tuple(sorted(acc.items()))

    reactions = tuple(Reaction(resolve(l, ln), resolve(r, ln), k) for l, r, k, ln in raw_reactions)
    if not reactions:
        raise NetworkParseError("network has no reactions")
    initial = None
    if conc:
        initial = {}
        for nm, v, lineno in conc:
            if nm not in index:
                raise NetworkParseError(f"unknown species {nm!r}", lineno)
            initial[nm] = v
    return CrnNetwork(tuple(species), reactions, initial=initial, moieties=dict(moieties))


def load_network(path) -> CrnNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


# --- kinetics ----------------------------------------------------------------

def _check_nonneg(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"state must have shape ({n},), got {x.shape}")
    if np.any(x < 0):
        raise ValueError("concentrations must be nonnegative")
    return x


def _flux_raw(net, x):
    xe = np.append(x, 1.0)
    return net.rates * xe[net._r1] * xe[net._r2]


def _flux_jac_raw(net, x):
    n, r = net.n_species, net.n_reactions
    xe = np.append(x, 1.0)
    Jz = np.zeros((r, n + 1))
    rows = np.arange(r)
    np.add.at(Jz, (rows, net._r1), xe[net._r2])
    np.add.at(Jz, (rows, net._r2), xe[net._r1])
    return net.rates[:, None] * Jz[:, :n]


def fluxes(net: CrnNetwork, x) -> np.ndarray:
    """Reaction rates ``k_j * prod_i x_i**p_ij`` (``0**0 == 1``)."""
    return _flux_raw(net, _check_nonneg(x, net.n_species))


def flux_jacobian(net: CrnNetwork, x) -> np.ndarray:
    """Derivative of :func:`fluxes` with respect to the state, shape ``(r, n)``."""
    return _flux_jac_raw(net, _check_nonneg(x, net.n_species))


def species_rhs(net: CrnNetwork, x) -> np.ndarray:
    """Right-hand side ``S v(x)`` of the mass-action ODE (no sign check)."""
    return net.S @ _flux_raw(net, np.asarray(x, dtype=float))


def species_rhs_jacobian(net: CrnNetwork, x) -> np.ndarray:
    return net.S @ _flux_jac_raw(net, np.asarray(x, dtype=float))


# --- conservation laws -------------------------------------------------------

def _rref(rows):
    """Reduced row echelon form over the rationals, pivots chosen left to right."""
    M = [[Fraction(v) for v in row] for row in rows]
    n_rows = len(M)
    n_cols = len(M[0]) if M else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        pv = M[r][c]
        M[r] = [v / pv for v in M[r]]
        for i in range(n_rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return M[:r], pivots


def _left_kernel(S):
    """Rational basis of ``{g : g^T S = 0}`` as a list of rows."""
    n = S.shape[0]
    R, pivots = _rref(S.T.tolist())
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for row, pc in zip(R, pivots):
            v[pc] = -row[fc]
        basis.append(v)
    return basis, len(pivots)


def _solve_identity_block(K, F):
    """Rows ``K_F^{-1} K`` so that columns `F` form the identity, or None if singular."""
    p = len(K)
    aug = [[K[i][f] for f in F] + list(K[i]) for i in range(p)]
    R, piv = _rref(aug)
    if piv[:p] != list(range(p)) or len(R) < p:
        return None
    return [row[p:] for row in R]


def _pick_private_species(N, F):
    """Re-choose each identity column as the smallest multiple of ``e_k``.

    Keeping the smallest multiple keeps the remaining entries >= 1 and is the
    only choice that can make them integral.
    """
    p, n = len(N), len(N[0])
    N = [list(r) for r in N]
    F = list(F)
    for k in range(p):
        best = None
        for j in range(n):
            col = [N[i][j] for i in range(p)]
            if col[k] > 0 and all(col[i] == 0 for i in range(p) if i != k):
                if best is None or col[k] < best[0]:
                    best = (col[k], j)
        t, j = best
        N[k] = [v / t for v in N[k]]
        F[k] = j
    return N, F


def _extreme_columns(K):
    """Lowest-index representative of each extreme direction of the column cone of `K`."""
    p, n = len(K), len(K[0])
    cols = []
    for j in range(n):
        col = [K[i][j] for i in range(p)]
        if any(col):
            cols.append((j, col))
    classes = []
    for j, col in cols:
        for cls in classes:
            ref = cls[0][1]
            i0 = next(i for i in range(p) if ref[i] != 0)
            ratio = col[i0] / ref[i0]
            if ratio > 0 and all(col[i] == ratio * ref[i] for i in range(p)):
                cls.append((j, col))
                break
        else:
            classes.append([(j, col)])
    reps = [np.array([float(v) for v in cls[0][1]]) for cls in classes]
    reps = [u / np.linalg.norm(u) for u in reps]
    extreme = []
    for c, u in enumerate(reps):
        others = [v for k, v in enumerate(reps) if k != c]
        if not others:
            extreme.append(classes[c][0][0])
            continue
        _, resid = nnls(np.column_stack(others), u)
        if resid > 1e-9:
            extreme.append(classes[c][0][0])
    return extreme


@dataclass(frozen=True)
class ConservationBasis:
    """Semi-positive integer conservation generators ``N`` (rows), ``N S = 0``.

    `N` is stored in the network's species order.  ``permutation`` lists the
    species so that ``N[:, permutation] == [I_p, N2]``; its first ``p``
    entries are the species private to each generator.
    """

    N: np.ndarray
    permutation: np.ndarray
    rank: int

    @property
    def p(self) -> int:
        return self.N.shape[0]

    @property
    def identity_species(self) -> np.ndarray:
        return self.permutation[: self.p]

    @property
    def dependent_species(self) -> np.ndarray:
        return self.permutation[self.p:]

    @property
    def N2(self) -> np.ndarray:
        return self.N[:, self.dependent_species]


def conservation_basis(net: CrnNetwork) -> ConservationBasis:
    """Exact weakly-elemented conservation basis of `net`.

    Raises
    ------
    NotWeaklyElementedError
        When no basis of nonnegative integer generators with a private
        species each exists.
    """
    S = net.S
    n = net.n_species
    K, rank = _left_kernel(S)
    p = n - rank
    if p == 0:
        N = np.zeros((0, n), dtype=np.int64)
        return ConservationBasis(N, np.arange(n), rank)

    N = None
    # lowest-index pivots first, the usual case when private species are listed first
    R, F = _rref(K)
    if all(v >= 0 for row in R for v in row):
        N = R
    else:
        F = _extreme_columns(K)
        if len(F) == p:
            cand = _solve_identity_block(K, F)
            if cand is not None and all(v >= 0 for row in cand for v in row):
                N = cand
    if N is None:
        raise NotWeaklyElementedError(
            f"conservation laws of this network admit no nonnegative [I, N2] basis (p={p})")
    N, F = _pick_private_species(N, F)
    if any(v.denominator != 1 for row in N for v in row):
        raise NotWeaklyElementedError("conservation generators with a private species are not integral")
    Nint = np.array([[int(v) for v in row] for row in N], dtype=np.int64)
    if np.any(Nint @ S != 0):
        raise AssertionError("conservation basis does not annihilate S")
    rest = [j for j in range(n) if j not in F]
    perm = np.array(list(F) + rest, dtype=np.intp)
    for arr in (Nint, perm):
        arr.flags.writeable = False
    return ConservationBasis(Nint, perm, rank)


# --- steady-state problem ----------------------------------------------------

@dataclass(frozen=True)
class SteadyStateTarget:
    network: CrnNetwork
    basis: ConservationBasis
    moieties: np.ndarray

    def __post_init__(self):
        c = np.array(self.moieties, dtype=float).reshape(-1)
        if c.shape != (self.basis.p,):
            raise ValueError(f"expected {self.basis.p} moiety totals, got {c.size}")
        if np.any(~(c > 0)) or not np.all(np.isfinite(c)):
            raise ValueError("moiety totals must be positive and finite")
        c.flags.writeable = False
        object.__setattr__(self, "moieties", c)


def make_target(net: CrnNetwork, basis: Optional[ConservationBasis] = None,
                moieties: Optional[Mapping[int, float] | Sequence[float]] = None,
                state=None) -> SteadyStateTarget:
    """Assemble a target from explicit totals, a state, or the network file's own data.

    Explicit `moieties` win over `state`; without either the network's
    ``moiety`` lines and then its ``conc`` lines are used.  Mapping keys are
    1-based generator indices.
    """
    basis = conservation_basis(net) if basis is None else basis
    if moieties is None and state is None:
        if net.moieties:
            moieties = net.moieties
        elif net.initial is not None:
            state = net.initial_state()
        elif basis.p > 0:
            raise ValueError("no moiety totals or initial state available")
    if moieties is not None:
        if isinstance(moieties, Mapping):
            missing = set(range(1, basis.p + 1)) - set(moieties)
            extra = set(moieties) - set(range(1, basis.p + 1))
            if missing or extra:
                raise ValueError(f"moiety indices must be exactly 1..{basis.p}")
            c = np.array([moieties[i] for i in range(1, basis.p + 1)], dtype=float)
        else:
            c = np.asarray(moieties, dtype=float)
    elif state is not None:
        x = np.asarray(state, dtype=float)
        if np.any(x < 0):
            raise ValueError("initial state has negative concentrations")
        c = basis.N @ x
    else:
        c = np.zeros(0)
    return SteadyStateTarget(net, basis, c)


def steady_state_problem(target: SteadyStateTarget) -> RootProblem:
    """Square system ``[S2 v(x); N x - c] = 0`` on the nonnegative orthant.

    ``S2`` holds the rows of ``S`` for the species that are not private to a
    conservation generator.
    """
    net, basis, c = target.network, target.basis, target.moieties
    S2 = net.S[basis.dependent_species].astype(float)
    N = basis.N.astype(float)

    def residual(x):
        return np.concatenate([S2 @ _flux_raw(net, x), N @ x - c])

    def jacobian(x):
        return np.vstack([S2 @ _flux_jac_raw(net, x), N])

    return RootProblem(residual, jacobian, BoxDomain.nonnegative(net.n_species),
                       name="steady state")


# --- sampling on the compatibility class -------------------------------------

class SccSampler:
    """Random strictly positive points with ``N x = c``, roughly uniform on the class.

    A hit-and-run walk over the polytope ``{x >= 0 : N x = c}``.  The walk
    starts from a constructed interior point: dependent species get a random
    positive profile scaled so that every conservation law keeps a random
    share of its total for its private species, which absorb the remainder.
    Successive calls continue the walk; the sequence is fixed by `seed`.
    """

    def __init__(self, target: SteadyStateTarget, seed=None, max_tries: int = 100,
                 steps: Optional[int] = None, burn_in: Optional[int] = None):
        self.target = target
        self.rng = np.random.default_rng(seed)
        self.max_tries = max_tries
        basis = target.basis
        n = target.network.n_species
        dim = n - basis.p
        self.steps = 5 * dim + 20 if steps is None else steps
        self.burn_in = 10 * self.steps if burn_in is None else burn_in
        self._F, self._R = basis.identity_species, basis.dependent_species
        self._N2 = basis.N2.astype(float)
        # directions keeping N x fixed: free moves of dependent species, compensated on private ones
        Z = np.zeros((n, dim))
        Z[self._R, np.arange(dim)] = 1.0
        Z[self._F, :] = -self._N2
        self._Z = Z
        c = target.moieties
        self._cap = float(np.max(c)) if c.size else 1.0
        self._x = None

    def _interior_point(self):
        c = self.target.moieties
        scale = float(np.mean(c)) if c.size else 1.0
        for _ in range(self.max_tries):
            y = 1.0 - self.rng.random(self._R.size)   # in (0, 1]
            share = 1.0 - self.rng.random(c.size)
            load = self._N2 @ y
            used = load > 0
            s = float(np.min(share[used] * c[used] / load[used])) if used.any() else scale
            x = np.zeros(self.target.network.n_species)
            x[self._R] = s * y
            x[self._F] = c - self._N2 @ x[self._R]
            if np.all(x > 0):
                return x
        raise SamplingError(f"no interior point after {self.max_tries} draws")

    def _walk(self, x, steps):
        Z, rng = self._Z, self.rng
        if Z.shape[1] == 0:
            return x
        for _ in range(steps):
            u = Z @ rng.standard_normal(Z.shape[1])
            nrm = np.linalg.norm(u)
            if nrm == 0:
                continue
            u /= nrm
            pos, neg = u > 0, u < 0
            lo = np.max(-x[pos] / u[pos]) if pos.any() else -np.inf
            hi = np.min(-x[neg] / u[neg]) if neg.any() else np.inf
            # unbounded chords (species outside every conservation law) are truncated
            lo, hi = max(lo, -self._cap), min(hi, self._cap)
            y = x + rng.uniform(lo, hi) * u
            if np.all(y > 0):
                x = y
        return x

    def __call__(self) -> np.ndarray:
        c = self.target.moieties
        tol = 1e-9 * np.linalg.norm(c)
        for _ in range(self.max_tries):
            if self._x is None:
                self._x = self._walk(self._interior_point(), self.burn_in)
            x = self._walk(self._x, self.steps)
            # restore N x = c exactly on the private species
            x[self._F] = c - self._N2 @ x[self._R]
            if np.all(x > 0) and np.linalg.norm(self.target.basis.N @ x - c) <= tol:
                self._x = x
                return x.copy()
            self._x = None
        raise SamplingError(f"no admissible point after {self.max_tries} draws")


def sample_on_scc(target: SteadyStateTarget, seed) -> np.ndarray:
    return SccSampler(target, seed)()
