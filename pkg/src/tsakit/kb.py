"""Knowledge-base generation and storage.

A plan sweeps a grid of load levels, randomized dispatches, and fault
locations over one case.  Each grid cell becomes a simulated scenario,
labelled on the clean trajectory and summarised by the 23 features.  The
whole knowledge base is a pure function of (case, plan), every random
draw being derived from the plan's master seed through a documented
counter scheme: scenario number `k` dispatches with the stream seeded by
(master_seed, k, 0) and, when measurement noise is requested, perturbs
its channels with the stream seeded by (master_seed, k, 1).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateKnowledgeBaseError,
    EquilibriumFailureError,
    FormatError,
    IntegrationDivergedError,
    InvalidArgumentError,
)
from .features import FEATURE_NAMES, FeatureVector, extract_features
from .network import NetworkCase, reduce_to_generators, solve_equilibrium
from .simulator import Scenario, Trajectory, label, simulate

KB_FORMAT = 1

# Concentration of the Dirichlet dispatch draw; higher keeps shares closer
# to uniform and equilibria solvable.
DISPATCH_CONCENTRATION = 8.0

NOISE_DEFAULT = 0.01
NOISE_MAX = 0.05

# More than this fraction of failed grid cells means the plan does not fit
# the case.
DISCARD_LIMIT = 0.20


def default_load_levels() -> tuple:
    """0.85 through 1.30 of base load in steps of 0.05."""
    return tuple(round(0.85 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class ScenarioPlan:
    fault_buses: tuple
    load_levels: tuple = ()
    dispatches_per_level: int = 5
    fault_clearing_cycles: int = 5
    observation_horizon_s: float = 5.0
    master_seed: int = 0

    def __post_init__(self):
        if not self.load_levels:
            object.__setattr__(self, "load_levels", default_load_levels())
        if not self.fault_buses:
            raise InvalidArgumentError("plan needs at least one fault bus")
        if any(lv <= 0 for lv in self.load_levels):
            raise InvalidArgumentError("load levels must be positive")
        if self.dispatches_per_level < 1:
            raise InvalidArgumentError("dispatches_per_level must be at least 1")
        if self.fault_clearing_cycles < 1:
            raise InvalidArgumentError("fault_clearing_cycles must be at least 1")

    @property
    def n_planned(self) -> int:
        return len(self.load_levels) * self.dispatches_per_level * len(self.fault_buses)

    def cells(self):
        """Yield (counter, load_level, dispatch_index, fault_bus) in plan order."""
        counter = 0
        for level in self.load_levels:
            for di in range(self.dispatches_per_level):
                for bus in self.fault_buses:
                    yield counter, level, di, bus
                    counter += 1


@dataclass(frozen=True)
class KnowledgeBase:
    case_id: str
    plan: ScenarioPlan
    samples: tuple
    noise_max_rel_error: float = 0.0
    discarded: tuple = ()

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def feature_matrix(self) -> np.ndarray:
        return np.vstack([s.values for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=int)


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray


def _stream_seed(master_seed: int, counter: int, stream: int) -> int:
    """Collapse the documented (master, counter, stream) triple to one int."""
    return int(np.random.SeedSequence((master_seed, counter, stream)).generate_state(1, np.uint64)[0])


def dispatch_shares(n_generators: int, dispatch_seed: int) -> np.ndarray:
    """Dirichlet share of total demand assigned to each machine."""
    rng = np.random.default_rng(dispatch_seed)
    return rng.dirichlet(np.full(n_generators, DISPATCH_CONCENTRATION))


def inject_noise(trajectory: Trajectory, max_rel_error: float, seed) -> Trajectory:
    """Multiplicative measurement error on the observable channels.

    Every sampled value m of the rotor angle, speed deviation, and
    electrical power channels becomes m * (1 + eps) with eps drawn
    uniformly from [-max_rel_error, +max_rel_error], one independent draw
    per value.  Mechanical input and inertia are model constants, not
    measurements, and stay untouched.
    """
    if max_rel_error < 0 or max_rel_error > NOISE_MAX:
        raise InvalidArgumentError(
            f"max_rel_error must lie in [0, {NOISE_MAX}], got {max_rel_error}"
        )
    if max_rel_error == 0:
        return trajectory
    rng = np.random.default_rng(seed)
    shape = trajectory.delta.shape
    noisy = {}
    for name in ("delta", "omega_dev", "pe"):
        eps = rng.uniform(-max_rel_error, max_rel_error, size=shape)
        noisy[name] = getattr(trajectory, name) * (1.0 + eps)
    return replace(trajectory, **noisy)


def generate_kb(
    case: NetworkCase,
    plan: ScenarioPlan,
    noise_max_rel_error: float = 0.0,
) -> KnowledgeBase:
    """Simulate the whole plan grid and collect labelled feature vectors.

    Grid cells whose equilibrium cannot be solved are discarded and
    recorded; more than DISCARD_LIMIT of them, or a knowledge base left
    with a single class, aborts generation.  Labels always come from the
    clean trajectory; noise, when requested, only affects the features.
    """
    if noise_max_rel_error < 0 or noise_max_rel_error > NOISE_MAX:
        raise InvalidArgumentError(f"noise level must lie in [0, {NOISE_MAX}]")
    for bus in plan.fault_buses:
        case.bus_index(bus)  # raises on unknown bus
    total_p = case.total_load_p
    if total_p <= 0:
        raise InvalidArgumentError("case carries no active load to dispatch")

    samples = []
    discarded = []
    for counter, level, di, bus in plan.cells():
        scenario_id = f"lv{level:.2f}/d{di}/b{bus}"
        dispatch_seed = _stream_seed(plan.master_seed, counter, 0)
        shares = dispatch_shares(case.n_generators, dispatch_seed)
        pm_target = shares * (total_p * level)
        scenario = Scenario(
            load_scale=level,
            dispatch_seed=dispatch_seed,
            fault_bus=bus,
            fault_clearing_cycles=plan.fault_clearing_cycles,
            observation_horizon_s=plan.observation_horizon_s,
        )
        try:
            reduced = reduce_to_generators(case, level)
            eq = solve_equilibrium(case, reduced, pm_target)
            trajectory = simulate(case, scenario, eq)
        except (EquilibriumFailureError, IntegrationDivergedError):
            discarded.append(scenario_id)
            continue
        lab = label(trajectory).value
        if noise_max_rel_error > 0:
            trajectory = inject_noise(
                trajectory,
                noise_max_rel_error,
                seed=_stream_seed(plan.master_seed, counter, 1),
            )
        samples.append(extract_features(trajectory, lab, scenario_id))

    if len(discarded) > DISCARD_LIMIT * plan.n_planned:
        raise DegenerateKnowledgeBaseError(
            f"{len(discarded)} of {plan.n_planned} scenarios were discarded; "
            "the plan does not fit the case"
        )
    kb = KnowledgeBase(
        case_id=case.case_id,
        plan=plan,
        samples=tuple(samples),
        noise_max_rel_error=noise_max_rel_error,
        discarded=tuple(discarded),
    )
    present = set(int(v) for v in kb.labels)
    if present != {-1, 1}:
        raise DegenerateKnowledgeBaseError(
            f"knowledge base holds classes {sorted(present)}; need both +1 and -1"
        )
    return kb


def split(kb: KnowledgeBase, n_train: int, seed) -> Split:
    """Deterministic shuffled train/test partition of the sample indices."""
    n = kb.n_samples
    if not 0 < n_train < n:
        raise InvalidArgumentError(f"n_train must lie strictly between 0 and {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return Split(train_indices=perm[:n_train], test_indices=perm[n_train:])


# ---------------------------------------------------------------------------
# File format: one JSON header line, then one JSON record per sample.


def _plan_to_doc(plan: ScenarioPlan) -> dict:
    return {
        "load_levels": list(plan.load_levels),
        "dispatches_per_level": plan.dispatches_per_level,
        "fault_buses": list(plan.fault_buses),
        "fault_clearing_cycles": plan.fault_clearing_cycles,
        "observation_horizon_s": plan.observation_horizon_s,
        "master_seed": plan.master_seed,
    }


def _plan_from_doc(doc: dict) -> ScenarioPlan:
    return ScenarioPlan(
        fault_buses=tuple(doc["fault_buses"]),
        load_levels=tuple(doc["load_levels"]),
        dispatches_per_level=int(doc["dispatches_per_level"]),
        fault_clearing_cycles=int(doc["fault_clearing_cycles"]),
        observation_horizon_s=float(doc["observation_horizon_s"]),
        master_seed=int(doc["master_seed"]),
    )


def kb_to_text(kb: KnowledgeBase) -> str:
    header = {
        "format": KB_FORMAT,
        "case_id": kb.case_id,
        "plan": _plan_to_doc(kb.plan),
        "features": list(FEATURE_NAMES),
        "noise_max_rel_error": kb.noise_max_rel_error,
        "discarded": list(kb.discarded),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for s in kb.samples:
        record = {
            "id": s.scenario_id,
            "label": int(s.label),
            "features": [float(v) for v in s.values],
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def kb_from_text(text: str) -> KnowledgeBase:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty knowledge-base document")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad header: {exc}", line=1) from None
    if not isinstance(header, dict) or header.get("format") != KB_FORMAT:
        raise FormatError("unsupported knowledge-base format", line=1)
    if list(header.get("features", [])) != list(FEATURE_NAMES):
        raise FormatError("feature order in header does not match Tz1..Tz23", line=1)
    try:
        plan = _plan_from_doc(header["plan"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"header plan is incomplete: {exc}", line=1) from None

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad record: {exc}", line=lineno) from None
        try:
            values = np.array(rec["features"], dtype=float)
            lab = int(rec["label"])
            sid = str(rec["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"record is incomplete: {exc}", line=lineno) from None
        if values.shape != (len(FEATURE_NAMES),):
            raise FormatError(
                f"record carries {values.size} features, expected {len(FEATURE_NAMES)}",
                line=lineno,
            )
        if lab not in (-1, 1):
            raise FormatError(f"label must be +1 or -1, got {lab}", line=lineno)
        samples.append(
            FeatureVector(
                f1=values[0:7], f2=values[7:14], f3=values[14:23], label=lab, scenario_id=sid
            )
        )
    return KnowledgeBase(
        case_id=str(header.get("case_id", "")),
        plan=plan,
        samples=tuple(samples),
        noise_max_rel_error=float(header.get("noise_max_rel_error", 0.0)),
        discarded=tuple(header.get("discarded", [])),
    )


def save_kb(kb: KnowledgeBase, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(kb_to_text(kb))


def load_kb(path) -> KnowledgeBase:
    with open(path, "r", encoding="utf-8") as fh:
        return kb_from_text(fh.read())


def file_sha256(path) -> str:
    """Hex digest used by reports to pin the knowledge base they used."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
