"""Scripted end-to-end experiments producing :class:`ExperimentReport` objects.

Every experiment is deterministic given its parameters and master seed.
Per-state (or per-row) generators are derived as
``np.random.default_rng([seed, index])``, so rows are independent of one
another and of evaluation order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ReversibilityMarginalWarning, ValidationError
from .kerr_qnd import KerrModel, discretized_family, log_kerr_diagonal, rounding_probability
from .measurement import MeasurementFamily, outcome_probabilities, sample_outcomes
from .operator_core import (
    DensityOperator,
    density_from_pure,
    fidelity,
    fock_density,
    random_density,
)
from .photon_counting import no_count_evolve, no_count_operator
from .reversing import (
    ReversalPlan,
    build_reversal,
    build_truncated_diagonal_reversal,
    joint_success_probability,
    verify_reversal,
)

SIGMA_BAND = 4.0
ANALYTIC_JOINT_TOL = 1e-10
RECOVERY_TOL = 1e-9
ROUNDING_TOL = 1e-4
UNITARY_LIMIT_LAMBDA_TAU = 1e-6


def row_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def binomial_z(successes: int, n_trials: int, p: float) -> float:
    """Standardized deviation of a binomial count from ``n_trials * p``.

    The standard deviation is floored at half a count: counts are integers,
    so for ``p`` within rounding of 0 or 1 the exact sigma would turn a
    deviation of ``1e-16`` into an arbitrarily large score.
    """
    sigma = max(math.sqrt(max(n_trials * p * (1.0 - p), 0.0)), 0.5)
    return (successes - n_trials * p) / sigma


@dataclass
class Column:
    name: str
    unit: str
    description: str
    values: list

    def to_dict(self) -> dict:
        return {"name": self.name, "unit": self.unit, "description": self.description, "values": self.values}


@dataclass
class Table:
    name: str
    columns: list[Column]

    def __post_init__(self):
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise ValidationError(f"table {self.name!r} has columns of unequal length {sorted(lengths)}")

    def column(self, name: str) -> list:
        for c in self.columns:
            if c.name == name:
                return c.values
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"name": self.name, "columns": [c.to_dict() for c in self.columns]}

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"{c.name} [{c.unit}]" for c in self.columns])
            for row in zip(*(c.values for c in self.columns)):
                writer.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


@dataclass
class Check:
    name: str
    measured: float
    tolerance_name: str
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "tolerance_name": self.tolerance_name,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.6g} ({self.tolerance_name}={self.tolerance:g})"


@dataclass
class ExperimentReport:
    experiment_name: str
    parameters: dict
    tables: list[Table] = field(default_factory=list)
    summary: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.summary)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def check(self, name: str) -> Check:
        for c in self.summary:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "experiment_name": self.experiment_name,
            "parameters": self.parameters,
            "tables": [t.to_dict() for t in self.tables],
            "summary": [c.to_dict() for c in self.summary],
            "passed": self.passed,
        }

    def write(self, out_dir) -> list[Path]:
        """Write ``<name>.json`` plus one ``<name>.<table>.csv`` per table."""
        from .formats import dumps

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.experiment_name}.json"]
        paths[0].write_text(dumps(self.to_dict()) + "\n")
        for t in self.tables:
            p = out / f"{self.experiment_name}.{t.name}.csv"
            t.write_csv(p)
            paths.append(p)
        return paths


def spin_family(theta: float) -> MeasurementFamily:
    """Two-outcome unsharp spin-1/2 measurement ``{diag(cos, sin), diag(sin, cos)}``."""
    c, s = math.cos(theta), math.sin(theta)
    return MeasurementFamily(
        ((0, np.diag([c, s])), (1, np.diag([s, c]))),
        completeness_declared=True,
        name=f"unsharp spin, theta={theta:g}",
        metadata={"theta": theta},
    )


def _reversal_family(plan: ReversalPlan) -> MeasurementFamily:
    return MeasurementFamily((("success", plan.r_success), ("failure", plan.r_complement)))


def _test_states(dim: int, n_states: int, rng: np.random.Generator) -> list[tuple[str, DensityOperator]]:
    states = [(f"fock{k}", fock_density(k, dim)) for k in range(min(dim, n_states))]
    while len(states) < n_states:
        states.append(("random", random_density(dim, rng)))
    return states


def run_joint_prob_experiment(
    family: MeasurementFamily,
    label,
    plan: ReversalPlan | None = None,
    n_states: int = 20,
    n_trials: int = 100_000,
    seed: int = 0,
) -> ExperimentReport:
    """Outcome ``label`` followed by its reversal: the joint success rate ignores the state.

    For each test state the first measurement is sampled from ``family``;
    on outcome ``label`` the reversing family ``{R0, Rc}`` is sampled on
    the post-measurement state.  The joint success frequency is compared
    with ``|c|^2`` while the marginal outcome probability is reported to
    show that it does depend on the state.
    """
    a = family.operator(label)
    plan = build_reversal(a) if plan is None else plan
    idx = family.index(label)
    reversal = _reversal_family(plan)
    p_joint = plan.success_probability

    states = _test_states(family.dim, n_states, row_rng(seed, 0))
    cols = {k: [] for k in ("index", "kind", "marginal", "conditional", "deviation", "frequency", "z")}
    for i, (kind, rho) in enumerate(states):
        rng = row_rng(seed, i + 1)
        analytic, computed = joint_success_probability(rho, a, plan)
        marginal = float(outcome_probabilities(family, rho)[idx])
        first = sample_outcomes(family, rho, n_trials, rng)
        hits = int(np.count_nonzero(first == idx))
        successes = 0
        conditional = float("nan")
        if marginal > 1e-12:
            post = DensityOperator.from_unnormalized(a @ rho.matrix @ a.conj().T)
            conditional = float(outcome_probabilities(reversal, post)[0])
            if hits:
                second = sample_outcomes(reversal, post, hits, rng)
                successes = int(np.count_nonzero(second == 0))
        freq = successes / n_trials
        cols["index"].append(i)
        cols["kind"].append(kind)
        cols["marginal"].append(marginal)
        cols["conditional"].append(conditional)
        cols["deviation"].append(abs(computed - analytic))
        cols["frequency"].append(freq)
        cols["z"].append(binomial_z(successes, n_trials, p_joint))

    table = Table(
        "states",
        [
            Column("state_index", "1", "test state number (Fock states first, then Ginibre random)", cols["index"]),
            Column("state_kind", "label", "fockK or random", cols["kind"]),
            Column("marginal_probability", "probability", "tr[rho A^dag A] for the chosen outcome", cols["marginal"]),
            Column("conditional_success", "probability", "tr[rho' R0^dag R0] after the outcome", cols["conditional"]),
            Column("joint_analytic_deviation", "probability", "|tr[rho (R0 A)^dag (R0 A)] - |c|^2|", cols["deviation"]),
            Column("joint_frequency", "probability", "sampled frequency of (outcome, success)", cols["frequency"]),
            Column("joint_z_score", "sigma", "(count - n_trials |c|^2) / binomial sigma (floored at 1/2 count)", cols["z"]),
        ],
    )
    max_dev = max(cols["deviation"])
    max_z = max(abs(z) for z in cols["z"])
    spread = max(cols["marginal"]) - min(cols["marginal"])
    summary = [
        Check("joint_analytic_state_independence", max_dev, "analytic_joint_tol", ANALYTIC_JOINT_TOL, max_dev < ANALYTIC_JOINT_TOL),
        Check("joint_frequency_within_band", max_z, "sigma_band", SIGMA_BAND, max_z <= SIGMA_BAND),
        Check("marginal_depends_on_state", spread, "min_marginal_spread", 1e-3, spread > 1e-3),
    ]
    params = {
        "family": family.name,
        "label": label,
        "c": complex(plan.c),
        "success_probability": p_joint,
        "n_states": n_states,
        "n_trials": n_trials,
        "seed": seed,
    }
    return ExperimentReport("joint-prob", params, [table], summary)


def run_sharp_limit_sweep(
    epsilons: Sequence[float] = (0.5, 0.25, 0.1),
    n: int = 2,
    dim: int = 5,
    margin_sigmas: float = 6.0,
    spacing_fraction: float = 0.25,
    n_trials: int = 100_000,
    seed: int = 0,
) -> ExperimentReport:
    """Sharpness versus reversibility as the Kerr measurement error shrinks.

    For input ``|n>`` each row reports the probability that the estimate
    rounds to ``n`` (continuous, by quadrature), the same probability on
    the discretized grid (exact sum and sampled), and the optimal success
    probability ``sigma_min^2`` for reversing the grid outcome ``nu = n``.
    """
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilons must be strictly decreasing")
    if not 0 <= n < dim:
        raise ValidationError(f"n = {n} outside dim {dim}")
    rho = fock_density(n, dim)
    cols = {k: [] for k in ("eps", "analytic", "reference", "grid", "sampled", "z", "success")}
    for i, e in enumerate(eps):
        model = KerrModel.from_epsilon(e, dim, margin_sigmas=margin_sigmas, spacing_fraction=spacing_fraction)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReversibilityMarginalWarning)
            fam = discretized_family(model)
        # half-open [n - 1/2, n + 1/2): grid points on the upper edge round up
        offset = np.asarray(fam.labels) - n
        window = (offset >= -0.5 - 1e-9) & (offset < 0.5 - 1e-9)
        probs = outcome_probabilities(fam, rho)
        p_grid = float(probs[window].sum())
        draws = sample_outcomes(fam, rho, n_trials, row_rng(seed, i))
        hits = int(np.count_nonzero(window[draws]))
        sampled = hits / n_trials
        success = math.exp(2.0 * float(np.min(log_kerr_diagonal(model, n, model.spacing))))
        cols["eps"].append(e)
        cols["analytic"].append(rounding_probability(model, n))
        cols["reference"].append(math.erf(1.0 / (2.0 * math.sqrt(2.0) * e)))
        cols["grid"].append(p_grid)
        cols["sampled"].append(sampled)
        cols["z"].append(binomial_z(hits, n_trials, p_grid))
        cols["success"].append(success)

    table = Table(
        "sweep",
        [
            Column("epsilon", "photons", "measurement error (Gaussian width)", cols["eps"]),
            Column("rounding_probability", "probability", "P(|nu - n| <= 1/2) for input |n>, quadrature", cols["analytic"]),
            Column("gaussian_cdf_reference", "probability", "erf(1 / (2 sqrt(2) epsilon))", cols["reference"]),
            Column("grid_rounding_probability", "probability", "same event summed over the discretized grid", cols["grid"]),
            Column("sampled_rounding_frequency", "probability", "sampled frequency on the grid", cols["sampled"]),
            Column("sampled_z_score", "sigma", "(count - n_trials p_grid) / binomial sigma (floored at 1/2 count)", cols["z"]),
            Column("reversal_success_probability", "probability", "sigma_min^2 of sqrt(dnu) A(n, epsilon)", cols["success"]),
        ],
    )
    rdev = max(abs(a - b) for a, b in zip(cols["analytic"], cols["reference"]))
    a = cols["analytic"]
    s = cols["success"]
    rounding_steps = min(y - x for x, y in zip(a, a[1:])) if len(a) > 1 else 0.0
    success_steps = min(x - y for x, y in zip(s, s[1:])) if len(s) > 1 else 0.0
    max_z = max(abs(z) for z in cols["z"])
    summary = [
        Check("rounding_matches_gaussian_cdf", rdev, "rounding_tol", ROUNDING_TOL, rdev <= ROUNDING_TOL),
        Check("rounding_increases_as_epsilon_decreases", rounding_steps, "min_increment", 0.0, rounding_steps > 0),
        Check("success_decreases_as_epsilon_decreases", success_steps, "min_decrement", 0.0, success_steps > 0),
        Check("sampled_rounding_within_band", max_z, "sigma_band", SIGMA_BAND, max_z <= SIGMA_BAND),
    ]
    params = {
        "epsilons": eps,
        "n": n,
        "dim": dim,
        "margin_sigmas": margin_sigmas,
        "spacing_fraction": spacing_fraction,
        "n_trials": n_trials,
        "seed": seed,
    }
    return ExperimentReport("sharp-limit", params, [table], summary)


def _recovery_row(rho: DensityOperator, lambda_tau: float, truncate_at, gamma, n_trials: int, rng):
    a = no_count_operator(lambda_tau, rho.dim)
    if truncate_at is None:
        plan = build_reversal(a, "optimal" if gamma is None else gamma)
    else:
        plan = build_truncated_diagonal_reversal(a, truncate_at, "optimal" if gamma is None else gamma)
    decohered = no_count_evolve(rho, lambda_tau)
    check = verify_reversal(rho, a, plan)
    no_count = rng.random(n_trials) < check.outcome_probability
    hits = int(np.count_nonzero(no_count))
    successes = int(np.count_nonzero(rng.random(hits) < check.success_probability))
    return {
        "decohered_fidelity": fidelity(decohered, rho),
        "recovered_fidelity": check.fidelity,
        "success_probability": plan.success_probability,
        "sampled_success_frequency": successes / n_trials,
        "sampled_successes": successes,
        "no_count_probability": check.outcome_probability,
        "out_of_support_mass": check.out_of_support_mass,
    }


def uniform_superposition(dim: int) -> DensityOperator:
    return density_from_pure(np.full(dim, 1.0 / math.sqrt(dim)))


def run_recovery_experiment(
    rho: DensityOperator | None = None,
    lambda_tau: float = 2 * math.log(2),
    truncate_at: int | None = None,
    gamma_policy="optimal",
    seed: int = 0,
    n_trials: int = 100_000,
    sweep_lambda_taus: Sequence[float] = (0.1, 0.5, 2 * math.log(2)),
    sweep_dims: Sequence[int] = (2, 4, 8),
) -> ExperimentReport:
    """Undo no-count decoherence with a reversing measurement.

    The no-count evolution is treated as the decoherence process.  The
    ``main`` table holds the requested state; the ``sweep`` table repeats
    the protocol on the uniform superposition for each ``(lambda_tau, dim)``
    and ends with a near-zero ``lambda_tau`` row marking the unit-success
    limit associated with unitarily reversible operations (an observation,
    not an implemented scheme).
    """
    rho = uniform_superposition(2) if rho is None else rho
    gamma = None if gamma_policy == "optimal" else gamma_policy
    main = _recovery_row(rho, lambda_tau, truncate_at, gamma, n_trials, row_rng(seed, 0))
    analytic = math.exp(-lambda_tau * (rho.dim - 1))
    p = main["success_probability"]
    main_z = binomial_z(main["sampled_successes"], n_trials, p)
    main_table = Table(
        "main",
        [
            Column("lambda_tau", "1", "no-count strength lambda*tau", [lambda_tau]),
            Column("dim", "levels", "Fock truncation", [rho.dim]),
            Column("decohered_fidelity", "1", "F(no-count state, initial)", [main["decohered_fidelity"]]),
            Column("recovered_fidelity", "1", "F(recovered state, initial)", [main["recovered_fidelity"]]),
            Column("success_probability", "probability", "|c|^2 of the reversal plan", [p]),
            Column("analytic_success_probability", "probability", "exp(-lambda_tau (dim - 1))", [analytic]),
            Column("sampled_success_frequency", "probability", "sampled joint frequency of no-count and success", [main["sampled_success_frequency"]]),
            Column("out_of_support_mass", "probability", "weight above the truncation cutoff", [main["out_of_support_mass"]]),
        ],
    )

    rows = {k: [] for k in ("lt", "dim", "dec", "rec", "succ", "analytic", "label")}
    k = 1
    for d in sweep_dims:
        for lt in list(sweep_lambda_taus) + [UNITARY_LIMIT_LAMBDA_TAU]:
            r = _recovery_row(uniform_superposition(d), lt, None, None, 1, row_rng(seed, k))
            k += 1
            rows["lt"].append(float(lt))
            rows["dim"].append(int(d))
            rows["dec"].append(r["decohered_fidelity"])
            rows["rec"].append(r["recovered_fidelity"])
            rows["succ"].append(r["success_probability"])
            rows["analytic"].append(math.exp(-lt * (d - 1)))
            rows["label"].append("unit-success limit (conjecture)" if lt == UNITARY_LIMIT_LAMBDA_TAU else "")
    sweep = Table(
        "sweep",
        [
            Column("lambda_tau", "1", "no-count strength", rows["lt"]),
            Column("dim", "levels", "Fock truncation, state = uniform superposition", rows["dim"]),
            Column("decohered_fidelity", "1", "F(no-count state, initial)", rows["dec"]),
            Column("recovered_fidelity", "1", "F(recovered state, initial)", rows["rec"]),
            Column("success_probability", "probability", "optimal |c|^2", rows["succ"]),
            Column("analytic_success_probability", "probability", "exp(-lambda_tau (dim - 1))", rows["analytic"]),
            Column("note", "label", "row annotation", rows["label"]),
        ],
    )

    worst_sweep = min(rows["rec"])
    decreasing_lt = _strictly_decreasing_groups(rows["dim"], rows["lt"], rows["succ"])
    by_lt = _strictly_decreasing_groups(rows["lt"], rows["dim"], rows["succ"])
    success_dev = abs(p - analytic) if truncate_at is None else 0.0
    summary = [
        Check("recovered_fidelity", 1.0 - main["recovered_fidelity"], "recovery_tol", RECOVERY_TOL,
              main["recovered_fidelity"] >= 1.0 - RECOVERY_TOL),
        Check("success_probability_matches_analytic", success_dev, "probability_tol", 1e-12, success_dev <= 1e-12),
        Check("sampled_success_within_band", abs(main_z), "sigma_band", SIGMA_BAND, abs(main_z) <= SIGMA_BAND),
        Check("sweep_recovered_fidelity", 1.0 - worst_sweep, "recovery_tol", RECOVERY_TOL, worst_sweep >= 1.0 - RECOVERY_TOL),
        Check("success_decreasing_in_lambda_tau", float(decreasing_lt), "boolean", 1.0, decreasing_lt),
        Check("success_decreasing_in_dim", float(by_lt), "boolean", 1.0, by_lt),
    ]
    params = {
        "state_dim": rho.dim,
        "lambda_tau": lambda_tau,
        "truncate_at": truncate_at,
        "gamma_policy": gamma_policy if isinstance(gamma_policy, str) else complex(gamma_policy),
        "n_trials": n_trials,
        "seed": seed,
        "sweep_lambda_taus": [float(x) for x in sweep_lambda_taus],
        "sweep_dims": [int(x) for x in sweep_dims],
    }
    return ExperimentReport("recovery", params, [main_table, sweep], summary)


def _strictly_decreasing_groups(group_key, order_key, values) -> bool:
    """Within each group, ``values`` strictly decrease as ``order_key`` increases."""
    groups: dict = {}
    for g, o, v in zip(group_key, order_key, values):
        groups.setdefault(g, []).append((o, v))
    for rows in groups.values():
        rows.sort()
        if any(b[1] >= a[1] for a, b in zip(rows, rows[1:])):
            return False
    return True
