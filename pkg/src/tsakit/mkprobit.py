"""Variational multiple-kernel multinomial probit classification.

The model couples S kernel spaces through a convex mixture of their Gram
matrices.  Class c keeps a regressor w_c over the N training samples with
an automatic-relevance Gamma prior on each weight's precision; latent
auxiliary responses y_cn carry the probit link: sample n belongs to the
class whose auxiliary response is largest.

Inference is mean-field coordinate ascent.  Regressor posteriors are
Gaussian with covariance (K K' + A_c)^-1, auxiliary posteriors are cone
truncated Gaussians whose means are computed by Gauss-Hermite quadrature
over a shared standard-normal variable, scale posteriors stay Gamma, and
the mixture weights are refreshed by importance sampling from a Dirichlet
proposal weighted by the model fit.  The variational lower bound below is
exact for the partially maximised auxiliary factor, so fixed-mixture
sweeps can never decrease it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, log_ndtr

from .errors import (
    DegenerateLabelsError,
    FormatError,
    InvalidArgumentError,
    NumericalFailureError,
)
from .features import FeatureVector, Standardizer, subset_columns
from .kernels import CompositeKernelState, KernelSpec, cross_gram

# 128 nodes keep the probability sum rule below 1e-9 even for wide
# predictive spreads; 64 starts to leak around 1e-6.
GH_NODES = 128
JITTER = 1e-8
JITTER_ESCALATION = (0.0, 1e-6, 1e-4)
GAMMA_PRIOR_SHAPE = 1e-3
GAMMA_PRIOR_RATE = 1e-3
RHO_BASE = 1.0
BETA_SAMPLES = 500
MAX_ITERS = 200
BOUND_REL_TOL = 1e-5
_LOG_2PI = math.log(2.0 * math.pi)

_gh_x, _gh_w = np.polynomial.hermite.hermgauss(GH_NODES)
_U = np.sqrt(2.0) * _gh_x       # nodes of a standard normal expectation
_UW = _gh_w / np.sqrt(np.pi)    # matching weights, summing to one


@dataclass
class ProbitMKLState:
    """Mutable training state; every posterior factor lives here."""

    kernel_state: CompositeKernelState
    targets: np.ndarray          # (N,) class indices
    n_classes: int
    k_eff: np.ndarray            # composite + jitter on the diagonal
    k_eff_sq: np.ndarray         # k_eff @ k_eff, reused by bound and solves
    w_mean: np.ndarray           # (C, N)
    w_cov: np.ndarray            # (C, N, N)
    w_logdet: np.ndarray         # (C,) cached log|Sigma_c|
    scale_shape: np.ndarray      # (C, N)
    scale_rate: np.ndarray       # (C, N)
    y_mean: np.ndarray           # (C, N)
    rho: np.ndarray              # (S,) Dirichlet proposal parameters
    converged: bool = False
    lb_trace: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return int(self.targets.shape[0])

    @property
    def beta(self) -> np.ndarray:
        return self.kernel_state.beta

    def set_beta(self, beta: np.ndarray) -> None:
        """Adopt a new mixture and rebuild the effective composite."""
        self.kernel_state = self.kernel_state.with_beta(beta)
        self.k_eff = self.kernel_state.composite + JITTER * np.eye(self.n_samples)
        self.k_eff_sq = self.k_eff @ self.k_eff


def init_state(grams, targets, n_classes: int | None = None) -> ProbitMKLState:
    """Set up posteriors at their documented starting point.

    Regressor means start at zero with unit covariance, scales at their
    Gamma prior, auxiliary means at +1 for the sample's own class and -1
    elsewhere, and the mixture uniform over the kernel spaces.
    """
    targets = np.asarray(targets, dtype=int)
    if targets.ndim != 1 or targets.size == 0:
        raise InvalidArgumentError("targets must be a non-empty 1-D integer array")
    present = np.unique(targets)
    if n_classes is None:
        n_classes = int(present.max()) + 1
    if present.min() < 0 or present.max() >= n_classes:
        raise InvalidArgumentError("targets must lie in [0, n_classes)")
    if present.size < 2:
        raise DegenerateLabelsError("training data holds fewer than two classes")
    n = targets.size
    s = len(grams)
    for g in grams:
        if np.asarray(g).shape != (n, n):
            raise InvalidArgumentError("each Gram matrix must be N x N for N samples")
    kernel_state = CompositeKernelState.build(grams, np.full(s, 1.0 / s))

    y = np.full((n_classes, n), -1.0)
    y[targets, np.arange(n)] = 1.0
    state = ProbitMKLState(
        kernel_state=kernel_state,
        targets=targets,
        n_classes=n_classes,
        k_eff=np.empty((n, n)),
        k_eff_sq=np.empty((n, n)),
        w_mean=np.zeros((n_classes, n)),
        w_cov=np.broadcast_to(np.eye(n), (n_classes, n, n)).copy(),
        w_logdet=np.zeros(n_classes),
        scale_shape=np.full((n_classes, n), GAMMA_PRIOR_SHAPE),
        scale_rate=np.full((n_classes, n), GAMMA_PRIOR_RATE),
        y_mean=y,
        rho=np.full(s, RHO_BASE),
    )
    state.set_beta(kernel_state.beta)
    return state


def _solve_spd(precision: np.ndarray):
    """Cholesky inverse with escalating diagonal regularisation."""
    n = precision.shape[0]
    for extra in JITTER_ESCALATION:
        try:
            chol = np.linalg.cholesky(precision + extra * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        identity = np.eye(n)
        cov = np.linalg.solve(chol.T, np.linalg.solve(chol, identity))
        logdet_cov = -2.0 * float(np.sum(np.log(np.diag(chol))))
        return cov, logdet_cov, extra
    raise NumericalFailureError(
        "regressor precision stayed non-positive-definite after jitter escalation"
    )


def update_regressors_and_scales(state: ProbitMKLState) -> None:
    """Refresh the Gaussian regressor posteriors, then their ARD scales."""
    kk = state.k_eff_sq
    for c in range(state.n_classes):
        precision = kk + np.diag(state.scale_shape[c] / state.scale_rate[c])
        cov, logdet, extra = _solve_spd(precision)
        if extra > 0.0:
            state.messages.append(
                f"class {c}: regressor solve needed extra jitter {extra:g}"
            )
        state.w_cov[c] = cov
        state.w_logdet[c] = logdet
        state.w_mean[c] = cov @ (state.k_eff @ state.y_mean[c])
    w_sq = state.w_mean**2 + np.einsum("cii->ci", state.w_cov)
    state.scale_shape = np.full_like(state.scale_shape, GAMMA_PRIOR_SHAPE + 0.5)
    state.scale_rate = GAMMA_PRIOR_RATE + 0.5 * w_sq


def _truncated_moments(m: np.ndarray, targets: np.ndarray):
    """Means of cone-truncated Gaussians, plus log truncation mass.

    For sample n with true class i the auxiliary vector is N(m_n, I)
    conditioned on y_in > y_jn for every other class.  Writing
    u = y_in - m_in, each rival mean picks up the expected hazard

        E[y_jn] = m_jn - E_u[ pdf_j prod_{l != i,j} cdf_l ] / Z_n,
        Z_n     = E_u[ prod_{l != i} cdf_l ],

    with pdf/cdf evaluated at u + m_in - m_ln, and the true class absorbs
    the sum of corrections so that the per-sample mean shift is zero.
    """
    n_classes, n = m.shape
    idx = np.arange(n)
    m_true = m[targets, idx]
    diff = m_true[None, :] - m                      # zero on the true class row
    arg = _U[None, None, :] + diff[:, :, None]      # (C, N, GH)
    log_cdf = log_ndtr(arg)
    rival = np.ones((n_classes, n), dtype=bool)
    rival[targets, idx] = False
    sum_log = np.where(rival[:, :, None], log_cdf, 0.0).sum(axis=0)  # (N, GH)
    z = np.maximum(np.exp(sum_log) @ _UW, 1e-300)
    log_z = np.log(z)
    log_pdf = -0.5 * arg**2 - 0.5 * _LOG_2PI
    leave_one_out = sum_log[None, :, :] - np.where(rival[:, :, None], log_cdf, 0.0)
    numer = np.exp(log_pdf + leave_one_out) @ _UW   # (C, N)
    corr = np.where(rival, numer / z[None, :], 0.0)
    y = m - corr
    y[targets, idx] = m_true + corr.sum(axis=0)
    return y, log_z


def update_auxiliaries(state: ProbitMKLState) -> None:
    m = state.w_mean @ state.k_eff
    y, _ = _truncated_moments(m, state.targets)
    if not np.all(np.isfinite(y)):
        bad = int(np.argwhere(~np.isfinite(y))[0][1])
        raise NumericalFailureError(f"auxiliary update went non-finite at sample {bad}")
    state.y_mean = y


def resample_beta(state: ProbitMKLState, n_samples: int = BETA_SAMPLES, seed=None) -> np.ndarray:
    """Importance-sample the kernel mixture around the current posterior.

    Candidates come from Dirichlet(rho); each is weighted by the fit
    exp(-||Y - W K^beta||_F^2 / 2) under the current posterior means, and
    the normalised weighted average becomes the new mixture.  The proposal
    is then re-centred as rho = 1 + S * beta.
    """
    s = state.kernel_state.n_spaces
    if s == 1:
        return state.beta
    if n_samples < 1:
        raise InvalidArgumentError("need at least one mixture candidate")
    rng = np.random.default_rng(seed)
    candidates = rng.dirichlet(state.rho, size=n_samples)      # (n, S)
    per_space = np.stack(
        [(state.w_mean @ g).ravel() for g in state.kernel_state.grams]
    )                                                           # (S, C*N)
    fitted = candidates @ per_space                             # (n, C*N)
    resid = state.y_mean.ravel()[None, :] - fitted
    log_w = -0.5 * np.sum(resid**2, axis=1)
    log_w -= log_w.max()
    weights = np.exp(log_w)
    total = float(weights.sum())
    if not np.isfinite(total) or total <= 0.0:
        state.messages.append("mixture resampling weights degenerate; keeping beta")
        return state.beta
    weights /= total
    beta = weights @ candidates
    beta = np.maximum(beta, 0.0)
    beta /= beta.sum()
    state.rho = RHO_BASE + s * beta
    state.set_beta(beta)
    return beta


def lower_bound(state: ProbitMKLState) -> float:
    """Variational lower bound with the auxiliary factor at its optimum.

    Three pieces: the log truncation mass of each sample minus the
    predictive-variance penalty, the Gaussian regressor term against its
    ARD prior, and the Gamma scale term against its prior.  Requires the
    cached regressor covariances to match the current posteriors.
    """
    m = state.w_mean @ state.k_eff
    _, log_z = _truncated_moments(m, state.targets)
    quad_penalty = sum(
        float(np.sum(state.w_cov[c] * state.k_eff_sq)) for c in range(state.n_classes)
    )
    bound = float(log_z.sum()) - 0.5 * quad_penalty

    e_alpha = state.scale_shape / state.scale_rate
    e_log_alpha = digamma(state.scale_shape) - np.log(state.scale_rate)
    w_sq = state.w_mean**2 + np.einsum("cii->ci", state.w_cov)
    n = state.n_samples
    bound += 0.5 * float(np.sum(e_log_alpha)) - 0.5 * float(np.sum(e_alpha * w_sq))
    bound += 0.5 * float(state.w_logdet.sum()) + 0.5 * n * state.n_classes

    a0, b0 = GAMMA_PRIOR_SHAPE, GAMMA_PRIOR_RATE
    prior = (a0 - 1.0) * e_log_alpha - b0 * e_alpha + a0 * math.log(b0) - gammaln(a0)
    entropy = (
        state.scale_shape
        - np.log(state.scale_rate)
        + gammaln(state.scale_shape)
        + (1.0 - state.scale_shape) * digamma(state.scale_shape)
    )
    bound += float(np.sum(prior + entropy))
    if not np.isfinite(bound):
        raise NumericalFailureError("variational lower bound is not finite")
    return bound


def train(
    grams,
    targets,
    seed: int = 0,
    max_iters: int = MAX_ITERS,
    rel_tol: float = BOUND_REL_TOL,
    n_beta_samples: int = BETA_SAMPLES,
    resample: bool = True,
) -> ProbitMKLState:
    """Run coordinate ascent to convergence of the lower bound.

    Stops once the relative bound change stays below `rel_tol` for two
    consecutive iterations, or after `max_iters`.  All randomness (the
    mixture proposals) derives from `seed`.
    """
    state = init_state(grams, targets)
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seed_seq.spawn(max_iters)
    previous = None
    streak = 0
    for it in range(max_iters):
        update_regressors_and_scales(state)
        update_auxiliaries(state)
        if resample:
            resample_beta(state, n_samples=n_beta_samples, seed=children[it])
        bound = lower_bound(state)
        state.lb_trace.append(bound)
        if previous is not None:
            rel = abs(bound - previous) / max(1.0, abs(bound))
            streak = streak + 1 if rel < rel_tol else 0
            if streak >= 2:
                state.converged = True
                break
        previous = bound
    return state


# ---------------------------------------------------------------------------
# Trained artefact and prediction.


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    label: int
    mean: np.ndarray
    spread: np.ndarray


@dataclass(frozen=True)
class TrainedModel:
    """Everything prediction needs, detached from the training run.

    `class_labels[c]` maps class index c back to the external label; index
    order is meaningful because argmax ties resolve to the first entry.
    """

    subset_names: tuple
    standardizers: tuple
    kernel_specs: tuple
    beta: np.ndarray
    w_mean: np.ndarray
    w_cov_diag: np.ndarray
    train_features: tuple
    class_labels: tuple
    converged: bool
    lb_trace: tuple

    @property
    def n_classes(self) -> int:
        return int(self.w_mean.shape[0])


def _composite_rows(model: TrainedModel, raw: np.ndarray) -> np.ndarray:
    """Mixture kernel rows between query samples and the training set."""
    rows = None
    for name, std, spec, train_x, weight in zip(
        model.subset_names,
        model.standardizers,
        model.kernel_specs,
        model.train_features,
        model.beta,
    ):
        x = std.transform(raw[:, subset_columns(name)])
        part = weight * cross_gram(x, train_x, spec)
        rows = part if rows is None else rows + part
    return rows


def _quadrature_probabilities(mean: np.ndarray, spread: np.ndarray) -> np.ndarray:
    """P(class c) = E_u prod_{j != c} Phi((u v_c + m_c - m_j) / v_j)."""
    n, c = mean.shape
    probs = np.empty((n, c))
    for ci in range(c):
        shifted = _U[None, :, None] * spread[:, None, ci : ci + 1]  # (n, GH, 1)
        arg = (shifted + (mean[:, None, ci : ci + 1] - mean[:, None, :])) / spread[:, None, :]
        log_terms = log_ndtr(arg)
        log_terms[:, :, ci] = 0.0
        probs[:, ci] = np.exp(log_terms.sum(axis=2)) @ _UW
    return probs


def model_probabilities(model: TrainedModel, raw: np.ndarray, normalize: bool = True):
    """Class probabilities for a batch of raw 23-feature rows.

    Also returns the predictive means and spreads per class.  The raw rows
    are standardized internally with the model's own transforms.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[None, :]
    k = _composite_rows(model, raw)
    mean = k @ model.w_mean.T                                  # (n, C)
    spread = np.sqrt(1.0 + k**2 @ model.w_cov_diag.T)          # (n, C)
    probs = _quadrature_probabilities(mean, spread)
    if normalize:
        probs = probs / probs.sum(axis=1, keepdims=True)
    return probs, mean, spread


def predictive_distribution(model: TrainedModel, sample) -> Prediction:
    """Full predictive law for one sample (FeatureVector or 23-vector)."""
    raw = sample.values if isinstance(sample, FeatureVector) else np.asarray(sample, float)
    probs, mean, spread = model_probabilities(model, raw)
    label = model.class_labels[int(np.argmax(probs[0]))]
    return Prediction(
        probabilities=probs[0], label=int(label), mean=mean[0], spread=spread[0]
    )


def classify(model: TrainedModel, sample) -> int:
    """Most probable class label; argmax ties fall to the first class."""
    return predictive_distribution(model, sample).label


# ---------------------------------------------------------------------------
# Model document, versioned and byte-stable.

MODEL_FORMAT = 1


def _standardizer_to_doc(s: Standardizer) -> dict:
    return {
        "mean": s.mean.tolist(),
        "std": s.std.tolist(),
        "zero_variance": [bool(z) for z in s.zero_variance],
    }


def _standardizer_from_doc(doc: dict) -> Standardizer:
    return Standardizer(
        mean=np.array(doc["mean"], dtype=float),
        std=np.array(doc["std"], dtype=float),
        zero_variance=np.array(doc["zero_variance"], dtype=bool),
    )


def _spec_to_doc(spec: KernelSpec) -> dict:
    return {
        "kind": spec.kind,
        "sigma": spec.sigma,
        "degree": spec.degree,
        "offset": spec.offset,
    }


def _spec_from_doc(doc: dict) -> KernelSpec:
    return KernelSpec(
        kind=doc["kind"],
        sigma=doc["sigma"],
        degree=int(doc["degree"]),
        offset=float(doc["offset"]),
    )


def model_to_document(model: TrainedModel) -> str:
    doc = {
        "model_format": MODEL_FORMAT,
        "subset_names": list(model.subset_names),
        "standardizers": [_standardizer_to_doc(s) for s in model.standardizers],
        "kernel_specs": [_spec_to_doc(s) for s in model.kernel_specs],
        "beta": model.beta.tolist(),
        "w_mean": model.w_mean.tolist(),
        "w_cov_diag": model.w_cov_diag.tolist(),
        "train_features": [x.tolist() for x in model.train_features],
        "class_labels": list(model.class_labels),
        "converged": bool(model.converged),
        "lb_trace": list(model.lb_trace),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def model_from_document(text: str) -> TrainedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("model_format") != MODEL_FORMAT:
        raise FormatError(
            f"unsupported model format {doc.get('model_format')!r}"
            if isinstance(doc, dict)
            else "model document must be a JSON object"
        )
    try:
        return TrainedModel(
            subset_names=tuple(doc["subset_names"]),
            standardizers=tuple(_standardizer_from_doc(d) for d in doc["standardizers"]),
            kernel_specs=tuple(_spec_from_doc(d) for d in doc["kernel_specs"]),
            beta=np.array(doc["beta"], dtype=float),
            w_mean=np.array(doc["w_mean"], dtype=float),
            w_cov_diag=np.array(doc["w_cov_diag"], dtype=float),
            train_features=tuple(np.array(x, dtype=float) for x in doc["train_features"]),
            class_labels=tuple(int(c) for c in doc["class_labels"]),
            converged=bool(doc["converged"]),
            lb_trace=tuple(float(v) for v in doc["lb_trace"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"model document is missing or corrupts field {exc}") from None


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_document(model))


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_document(fh.read())
