"""Brute-force information checks on small discrete joints.

Verifies, numerically, that a low-noise textual encoding of an informative
latent view must reduce label uncertainty beyond the raw input: whenever the
encoding loses little (H(embedding|description) = eps > 0) and the embedding
is genuinely informative beyond the input (H(label|input) drops by
eps' > eps when also conditioning on the embedding), then
H(label | input, description) < H(label | input), with the quantitative bound
H(label|input, description) <= H(label|input) + eps - eps'.

Joints live over four variables, axis order (input, embedding, description,
label), alphabets between 2 and 6, so exact summation in double precision is
trivial. All entropies are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIABLES = ("input", "embedding", "description", "label")
DEFAULT_TOL = 1e-9


class InvalidVariableSubsetError(Exception):
    pass


@dataclass
class DiscreteJoint:
    pmf: np.ndarray  # shape = alphabet sizes for (input, embedding, description, label)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != len(VARIABLES):
            raise ValueError(f"pmf must have {len(VARIABLES)} axes, got {self.pmf.ndim}")
        if any(not 2 <= size <= 6 for size in self.pmf.shape):
            raise ValueError(f"alphabet sizes must be in [2, 6], got {self.pmf.shape}")
        if (self.pmf < 0).any():
            raise ValueError("pmf entries must be nonnegative")
        if abs(self.pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf must sum to 1 (got {self.pmf.sum()!r})")

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.pmf.shape


def _axes(names: tuple[str, ...] | list[str]) -> tuple[int, ...]:
    axes = []
    for name in names:
        if name not in VARIABLES:
            raise InvalidVariableSubsetError(f"unknown variable {name!r}")
        axes.append(VARIABLES.index(name))
    if len(set(axes)) != len(axes):
        raise InvalidVariableSubsetError(f"repeated variable in {names!r}")
    return tuple(axes)


def _marginal(joint: DiscreteJoint, keep_axes: tuple[int, ...]) -> np.ndarray:
    drop = tuple(a for a in range(len(VARIABLES)) if a not in keep_axes)
    summed = joint.pmf.sum(axis=drop) if drop else joint.pmf
    # sum() collapses axes; reorder what's left to match keep_axes order
    remaining = [a for a in range(len(VARIABLES)) if a in keep_axes]
    order = [remaining.index(a) for a in keep_axes]
    return np.transpose(summed, order)


def _plogq(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(q[mask])))


def conditional_entropy(joint: DiscreteJoint, target, given=()) -> float:
    """H(target | given) in bits: sum of p(t,g) * log2(p(g) / p(t,g)).

    `given` may be empty (plain entropy); target and given must be disjoint,
    target non-empty.
    """
    target = tuple(target)
    given = tuple(given)
    if not target:
        raise InvalidVariableSubsetError("target must be non-empty")
    t_axes = _axes(target)
    g_axes = _axes(given)
    if set(t_axes) & set(g_axes):
        raise InvalidVariableSubsetError(f"target {target!r} and given {given!r} overlap")
    p_tg = _marginal(joint, t_axes + g_axes)
    if g_axes:
        p_g = p_tg.sum(axis=tuple(range(len(t_axes))))
        p_g_full = np.broadcast_to(p_g, p_tg.shape)
        h = _plogq(p_tg, p_g_full) - _plogq(p_tg, p_tg)
    else:
        h = -_plogq(p_tg, p_tg)
    return max(h, 0.0)


def mutual_information(joint: DiscreteJoint, a, b, given=()) -> float:
    """I(a ; b | given) = H(a | given) - H(a | b, given), in bits."""
    return conditional_entropy(joint, a, given) - conditional_entropy(joint, a, tuple(b) + tuple(given))


@dataclass
class ChainReport:
    decomposition_slack: float  # H(y|X,T) vs H(y|X,H,T) + I(y;H|X,T)
    info_bound_slack: float     # I(y;H|X,T) <= H(H|X,T)
    drop_bound_slack: float     # H(y|X,T) <= H(y|X,H) + H(H|T)
    decomposition_holds: bool
    info_bound_holds: bool
    drop_bound_holds: bool

    @property
    def all_hold(self) -> bool:
        return self.decomposition_holds and self.info_bound_holds and self.drop_bound_holds


def verify_chain(joint: DiscreteJoint, tol: float = DEFAULT_TOL) -> ChainReport:
    """Check the three entropy relations the headline bound rests on, for an
    arbitrary joint: the exact decomposition of H(label|input, description),
    the entropy bound on conditional mutual information, and the bound from
    dropping conditioning variables."""
    h_y_xt = conditional_entropy(joint, ("label",), ("input", "description"))
    h_y_xht = conditional_entropy(joint, ("label",), ("input", "embedding", "description"))
    i_y_h_xt = mutual_information(joint, ("label",), ("embedding",), ("input", "description"))
    decomposition_slack = abs(h_y_xt - (h_y_xht + i_y_h_xt))

    h_h_xt = conditional_entropy(joint, ("embedding",), ("input", "description"))
    info_bound_slack = i_y_h_xt - h_h_xt

    h_y_xh = conditional_entropy(joint, ("label",), ("input", "embedding"))
    h_h_t = conditional_entropy(joint, ("embedding",), ("description",))
    drop_bound_slack = h_y_xt - (h_y_xh + h_h_t)

    return ChainReport(
        decomposition_slack=decomposition_slack,
        info_bound_slack=info_bound_slack,
        drop_bound_slack=drop_bound_slack,
        decomposition_holds=decomposition_slack <= tol,
        info_bound_holds=info_bound_slack <= tol,
        drop_bound_holds=drop_bound_slack <= tol,
    )


@dataclass
class TheoremReport:
    epsilon: float        # H(embedding | description)
    epsilon_prime: float  # H(label | input) - H(label | input, embedding)
    lhs: float            # H(label | input, description)
    rhs: float            # H(label | input)
    conditions_met: bool
    conclusion_holds: bool | None  # None when the hypotheses fail
    boundary_epsilon_zero: bool = False

    @property
    def quantitative_bound(self) -> float:
        return self.rhs + self.epsilon - self.epsilon_prime


def verify_theorem(joint: DiscreteJoint, tol: float = DEFAULT_TOL) -> TheoremReport:
    """Evaluate the fidelity / non-redundancy hypotheses and, when they hold,
    the strict and quantitative conclusions."""
    epsilon = conditional_entropy(joint, ("embedding",), ("description",))
    epsilon_prime = conditional_entropy(joint, ("label",), ("input",)) - conditional_entropy(
        joint, ("label",), ("input", "embedding")
    )
    lhs = conditional_entropy(joint, ("label",), ("input", "description"))
    rhs = conditional_entropy(joint, ("label",), ("input",))
    conditions_met = epsilon > 0.0 and epsilon_prime > epsilon
    conclusion: bool | None = None
    if conditions_met:
        conclusion = lhs < rhs and lhs <= rhs + epsilon - epsilon_prime + tol
    return TheoremReport(
        epsilon=epsilon,
        epsilon_prime=epsilon_prime,
        lhs=lhs,
        rhs=rhs,
        conditions_met=conditions_met,
        conclusion_holds=conclusion,
        boundary_epsilon_zero=(epsilon == 0.0 and epsilon_prime > 0.0),
    )


def random_joint(rng: np.random.Generator, sizes: tuple[int, int, int, int] | None = None) -> DiscreteJoint:
    """Arbitrary random joint (exponential weights, normalized)."""
    if sizes is None:
        sizes = tuple(rng.integers(2, 7, size=4))
    pmf = rng.exponential(1.0, size=sizes)
    return DiscreteJoint(pmf / pmf.sum())


def _noisy_identity(size: int, noise: float) -> np.ndarray:
    """Row-stochastic channel: identity mixed with the uniform distribution."""
    return (1.0 - noise) * np.eye(size) + noise * np.full((size, size), 1.0 / size)


def condition_satisfying_joint(rng: np.random.Generator) -> DiscreteJoint:
    """Construct a joint meeting both hypotheses by channel composition.

    A latent topic drives everything: the label and the embedding are low-noise
    views of it, the input is a coarse noisy view (so the embedding carries
    label information the input lacks), and the description is a low-noise
    encoding of the embedding. The description noise is shrunk until the
    fidelity gap sits strictly inside the non-redundancy gap; it never reaches
    zero, keeping the fidelity hypothesis strict.
    """
    m = int(rng.integers(3, 7))       # latent/embedding/description/label alphabet
    x_size = int(rng.integers(2, 4))  # deliberately coarser than the latent
    p_latent = rng.dirichlet(np.full(m, 4.0))

    y_given_l = _noisy_identity(m, float(rng.uniform(0.01, 0.08)))
    h_given_l = _noisy_identity(m, float(rng.uniform(0.0, 0.05)))
    x_base = np.zeros((m, x_size))
    for latent in range(m):
        x_base[latent, latent % x_size] = 1.0
    x_noise = float(rng.uniform(0.2, 0.5))
    x_given_l = (1.0 - x_noise) * x_base + x_noise / x_size

    t_noise = float(rng.uniform(0.01, 0.05))
    while True:
        t_given_h = _noisy_identity(m, t_noise)
        # pmf[x, h, t, y] = sum_l p(l) p(x|l) p(h|l) p(t|h) p(y|l)
        pmf = np.einsum("l,lx,lh,ht,ly->xhty", p_latent, x_given_l, h_given_l, t_given_h, y_given_l)
        joint = DiscreteJoint(pmf)
        report = verify_theorem(joint)
        if report.conditions_met:
            return joint
        t_noise /= 4.0
        if t_noise < 1e-6:
            raise RuntimeError("failed to construct a condition-satisfying joint")


@dataclass
class SuiteReport:
    trials: int
    chain_trials: int
    conditions_met_all: bool
    conclusion_failures: int
    chain_failures: int
    max_bound_violation: float
    max_chain_slack: float
    min_epsilon_gap: float

    @property
    def passed(self) -> bool:
        return self.conditions_met_all and self.conclusion_failures == 0 and self.chain_failures == 0


def run_suite(trials: int = 1000, chain_trials: int = 500, seed: int = 0,
              tol: float = DEFAULT_TOL) -> SuiteReport:
    """Randomized verification: constructive joints for the headline bound,
    arbitrary joints for the supporting chain of relations."""
    rng = np.random.default_rng(seed)
    conditions_met_all = True
    conclusion_failures = 0
    max_bound_violation = 0.0
    min_epsilon_gap = float("inf")
    for _ in range(trials):
        joint = condition_satisfying_joint(rng)
        report = verify_theorem(joint, tol)
        conditions_met_all &= report.conditions_met
        min_epsilon_gap = min(min_epsilon_gap, report.epsilon_prime - report.epsilon)
        if not report.conclusion_holds:
            conclusion_failures += 1
        max_bound_violation = max(max_bound_violation, report.lhs - report.quantitative_bound,
                                  report.lhs - report.rhs)
    chain_failures = 0
    max_chain_slack = 0.0
    for _ in range(chain_trials):
        joint = random_joint(rng)
        chain = verify_chain(joint, tol)
        if not chain.all_hold:
            chain_failures += 1
        max_chain_slack = max(max_chain_slack, chain.decomposition_slack,
                              chain.info_bound_slack, chain.drop_bound_slack)
    return SuiteReport(
        trials=trials,
        chain_trials=chain_trials,
        conditions_met_all=conditions_met_all,
        conclusion_failures=conclusion_failures,
        chain_failures=chain_failures,
        max_bound_violation=max_bound_violation,
        max_chain_slack=max_chain_slack,
        min_epsilon_gap=min_epsilon_gap,
    )
