"""Learning a containing degree-2 region from positive samples only.

The loop maintains an online halfspace learner over the degree-2 monomial
expansion (so its linear hypotheses are exactly degree-2 threshold
functions).  Misclassified positives from the sample pool are fed with label
+1 until the pool is covered; then the hypothesis region's Gaussian mass is
counted, and either the target's mass estimate is already a gamma/2 fraction
of it (terminate: the hypothesis is dense enough) or a fresh point is drawn
from the hypothesis region and fed with label -1, which is correct with
probability 1 - gamma per draw since the target occupies less than a gamma
fraction of the hypothesis.  Points are discretized to a kappa lattice
before entering the learner; how often that rounding flips the hypothesis
sign is tracked and must stay below 1%.

The default learner is a central-cut ellipsoid over weight space: predict
with the center, cut on each violated constraint, and keep cutting until the
center is consistent with every example fed so far.  Each cut shrinks the
ellipsoid volume by e^(-1/(2(m+1))), so when some halfspace separates the
examples with margin at least ``margin_floor``, the total number of cuts
(hence of mistakes) is at most ~2 m (m+1) ln(1/margin_floor).  A perceptron
is provided as a faster fallback; it honors the mistake-bound role but does
not maintain consistency with past examples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .counter import count_ptf_gaussian, mc_count
from .numerics import Rng
from .quadform import QuadraticForm, sign_at
from .sampler import PtfSampler

__all__ = [
    "feature_dim",
    "feature_map",
    "quadratic_from_weights",
    "weights_from_quadratic",
    "EllipsoidLearner",
    "PerceptronLearner",
    "DensifierConfig",
    "DensifyResult",
    "BudgetExhaustedError",
    "MarginError",
    "densify",
    "planted_experiment",
]


def feature_dim(n: int) -> int:
    """n linear + n(n+1)/2 quadratic monomials + constant 1."""
    return n + n * (n + 1) // 2 + 1


def feature_map(x: np.ndarray) -> np.ndarray:
    """Degree-2 monomial expansion (x_1..x_n, x_1^2, x_1 x_2, ..., x_n^2, 1).

    Accepts one point (n,) or a batch (k, n); linear functions of the output
    correspond bijectively to degree-2 polynomials in x.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    k, n = pts.shape
    iu, ju = np.triu_indices(n)
    out = np.concatenate(
        [pts, pts[:, iu] * pts[:, ju], np.ones((k, 1))],
        axis=1,
    )
    return out[0] if single else out


def quadratic_from_weights(weights: np.ndarray, n: int) -> QuadraticForm:
    """Interpret a feature-space weight vector as a quadratic form: the
    hypothesis sign(<w, feature_map(x)>) equals sign_at of the result."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (feature_dim(n),):
        raise ValueError(f"expected {feature_dim(n)} weights for n = {n}")
    b = weights[:n]
    iu, ju = np.triu_indices(n)
    A = np.zeros((n, n))
    quad = weights[n : n + iu.size]
    A[iu, ju] = quad
    A[ju, iu] = quad
    off = iu != ju  # cross terms split evenly across the two mirror entries
    A[iu[off], ju[off]] /= 2.0
    A[ju[off], iu[off]] /= 2.0
    return QuadraticForm(A=A, b=b, c=float(weights[-1]))


def weights_from_quadratic(q: QuadraticForm) -> np.ndarray:
    """Inverse of :func:`quadratic_from_weights`."""
    iu, ju = np.triu_indices(q.n)
    quad = np.where(iu == ju, q.A[iu, ju], 2.0 * q.A[iu, ju])
    return np.concatenate([q.b, quad, [q.c]])


class MarginError(RuntimeError):
    """No halfspace with the requested margin is consistent with the
    constraints fed so far."""


class EllipsoidLearner:
    """Online halfspace learner by central-cut ellipsoid over weight space.

    predict() uses the center with sign(0) = +1; update() records the
    example, counts a mistake when the prediction was wrong, and applies
    central cuts until the center is consistent with everything recorded.
    """

    def __init__(self, dim: int, margin_floor: float = 1e-6):
        if dim < 2:
            raise ValueError("ellipsoid learner needs dimension >= 2")
        self.dim = dim
        self.margin_floor = float(margin_floor)
        self.center = np.zeros(dim)
        self.shape = np.eye(dim)
        self.mistakes = 0
        self.cuts = 0
        self.cut_budget = int(math.ceil(2.0 * dim * (dim + 1) * math.log(1.0 / margin_floor))) + dim
        self._examples: list[tuple[np.ndarray, int]] = []

    @property
    def weights(self) -> np.ndarray:
        return self.center.copy()

    def mistake_bound(self) -> int:
        return self.cut_budget

    def predict(self, v: np.ndarray) -> int:
        return 1 if float(self.center @ v) >= 0.0 else -1

    def _violated(self, v: np.ndarray, label: int) -> bool:
        s = float(self.center @ v)
        return s < 0.0 if label == 1 else s >= 0.0

    def _cut(self, a: np.ndarray) -> None:
        # keep the halfspace {w : a.w >= 0}; the center currently violates it
        m = self.dim
        pa = self.shape @ a
        denom = float(a @ pa)
        if denom <= 0.0:
            raise MarginError("ellipsoid collapsed; constraints are inconsistent")
        g = pa / math.sqrt(denom)
        self.center = self.center + g / (m + 1.0)
        self.shape = (m * m / (m * m - 1.0)) * (
            self.shape - (2.0 / (m + 1.0)) * np.outer(pa, pa) / denom
        )
        self.shape = 0.5 * (self.shape + self.shape.T)
        self.cuts += 1
        if self.cuts > self.cut_budget:
            raise MarginError(
                f"cut budget {self.cut_budget} exhausted; no consistent halfspace "
                f"with margin {self.margin_floor} appears to exist"
            )

    def update(self, v: np.ndarray, label: int) -> None:
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("zero feature vector")
        v = v / norm
        if self.predict(v) != label:
            self.mistakes += 1
        self._examples.append((v, int(label)))
        # restore consistency with everything recorded so far
        progress = True
        while progress:
            progress = False
            for ev, el in self._examples:
                if self._violated(ev, el):
                    self._cut(el * ev)
                    progress = True


class PerceptronLearner:
    """Classic perceptron; mistake-bounded under a margin but does not keep
    consistency with past examples (fast fallback)."""

    def __init__(self, dim: int, margin_floor: float = 1e-6):
        self.dim = dim
        self.margin_floor = float(margin_floor)
        self.center = np.zeros(dim)
        self.mistakes = 0

    @property
    def weights(self) -> np.ndarray:
        return self.center.copy()

    def mistake_bound(self) -> int:
        return int(math.ceil(1.0 / self.margin_floor**2))

    def predict(self, v: np.ndarray) -> int:
        return 1 if float(self.center @ v) >= 0.0 else -1

    def update(self, v: np.ndarray, label: int) -> None:
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("zero feature vector")
        v = v / norm
        if self.predict(v) != label:
            self.mistakes += 1
            self.center = self.center + label * v


_LEARNERS = {"ellipsoid": EllipsoidLearner, "perceptron": PerceptronLearner}


@dataclass(frozen=True)
class DensifierConfig:
    """Parameters of one densifier run; None fields are derived at run time
    (gamma = 1/(8M), n_pos from the feature dimension, budget from the
    learner's own bound)."""

    eps: float = 0.1
    delta: float = 0.1
    gamma: float | None = None
    n_pos: int | None = None
    mistake_budget: int | None = None
    kappa: float = 2.0**-16
    p_hat: float | None = None
    count_eps: float | None = None
    sample_eps: float = 0.25
    count_tau: float = 2.0**-8
    sample_tau: float = 2.0**-5
    learner: str = "ellipsoid"
    margin_floor: float = 1e-6
    max_rounds: int | None = None

    def resolve(self, n: int) -> "DensifierConfig":
        m = feature_dim(n)
        learner_cls = _LEARNERS[self.learner]
        budget = self.mistake_budget
        if budget is None:
            budget = learner_cls(m, self.margin_floor).mistake_bound()
        gamma_scale = max(budget, 1)
        gamma = self.gamma if self.gamma is not None else 1.0 / (8.0 * gamma_scale)
        if gamma > 1.0 / (4.0 * gamma_scale):
            raise ValueError("gamma must be at most 1/(4 * mistake budget)")
        pos_floor = int(math.ceil((m * m + math.log(1.0 / self.delta)) / self.eps**2))
        n_pos = self.n_pos if self.n_pos is not None else pos_floor
        if n_pos < pos_floor:
            raise ValueError(
                f"n_pos = {n_pos} is below the coverage bound {pos_floor} for "
                f"eps = {self.eps}, delta = {self.delta}"
            )
        count_eps = self.count_eps if self.count_eps is not None else self.delta
        max_rounds = self.max_rounds if self.max_rounds is not None else 4 * budget + 16
        return replace(
            self,
            gamma=gamma,
            n_pos=n_pos,
            mistake_budget=budget,
            count_eps=count_eps,
            max_rounds=max_rounds,
        )


class BudgetExhaustedError(RuntimeError):
    """The run hit its mistake or round budget before the density test
    fired; the transcript so far is attached."""

    def __init__(self, message: str, transcript: list[dict]):
        super().__init__(message)
        self.transcript = transcript


@dataclass
class DensifyResult:
    hypothesis: QuadraticForm
    transcript: list[dict] = field(repr=False)
    mistakes: int = 0
    rounds: int = 0
    kappa_flip_fraction: float = 0.0
    density_estimate: float = 1.0

    def transcript_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.transcript)


def _round_kappa(x: np.ndarray, kappa: float) -> np.ndarray:
    return np.rint(np.asarray(x, dtype=float) / kappa) * kappa


def densify(
    pos_source,
    cfg: DensifierConfig,
    rng: Rng,
    f_oracle=None,
) -> DensifyResult:
    """Run the densifier loop against a stream of positive examples.

    ``pos_source(k)`` must return k fresh draws from the target-conditioned
    Gaussian as an array (k, n).  ``cfg.p_hat`` is the caller's estimate of
    the target mass (required: the density termination test compares against
    it).  ``f_oracle`` (batch points -> +-1), when given, is used only to
    annotate the transcript with true labels.

    Returns the hypothesis as a quadratic form whose sign agrees with the
    learner, plus the full event transcript.  Raises BudgetExhaustedError if
    the budgets run out before the density test passes.
    """
    if cfg.p_hat is None:
        raise ValueError("cfg.p_hat (target mass estimate) is required")
    peek = np.asarray(pos_source(1), dtype=float)
    if peek.ndim != 2:
        raise ValueError("pos_source must return a (k, n) array")
    n = peek.shape[1]
    cfg = cfg.resolve(n)
    pool = np.asarray(pos_source(int(cfg.n_pos)), dtype=float)
    learner = _LEARNERS[cfg.learner](feature_dim(n), cfg.margin_floor)
    pool_disc = _round_kappa(pool, cfg.kappa)
    feats_raw = feature_map(pool)
    feats = feature_map(pool_disc)
    transcript: list[dict] = []
    fed = 0
    flips = 0
    neg_sampler: PtfSampler | None = None
    neg_key: bytes | None = None

    def hypothesis() -> QuadraticForm:
        return quadratic_from_weights(learner.weights, n)

    def feed(raw_x: np.ndarray, disc_feat: np.ndarray, raw_feat: np.ndarray, label: int, event: str, step: int) -> None:
        nonlocal fed, flips
        pred_disc = learner.predict(disc_feat / np.linalg.norm(disc_feat))
        pred_raw = learner.predict(raw_feat / np.linalg.norm(raw_feat))
        if pred_disc != pred_raw:
            flips += 1
        fed += 1
        entry = {
            "step": step,
            "event": event,
            "x": [float(v) for v in raw_x],
            "label": label,
            "mistake": pred_disc != label,
        }
        if f_oracle is not None:
            entry["true_label"] = int(np.asarray(f_oracle(raw_x[None, :]))[0])
        transcript.append(entry)
        learner.update(disc_feat, label)

    rounds = 0
    while True:
        if learner.mistakes > cfg.mistake_budget:
            raise BudgetExhaustedError(
                f"mistake budget {cfg.mistake_budget} exhausted", transcript
            )
        preds = np.where(feats @ learner.weights >= 0.0, 1, -1)
        bad = np.flatnonzero(preds == -1)
        if bad.size:
            j = int(bad[0])
            feed(pool[j], feats[j], feats_raw[j], +1, "pos_mistake", rounds)
            continue
        g = hypothesis()
        res = count_ptf_gaussian(g, cfg.count_eps, tau=cfg.count_tau, floor=0.0)
        transcript.append(
            {"step": rounds, "event": "count", "estimate": res.estimate}
        )
        if cfg.p_hat >= 0.5 * cfg.gamma * res.estimate:
            transcript.append(
                {"step": rounds, "event": "terminate", "reason": "density"}
            )
            flip_frac = flips / fed if fed else 0.0
            if flip_frac > 0.01:
                raise AssertionError(
                    f"kappa rounding flipped {flip_frac:.1%} of fed points"
                )
            return DensifyResult(
                hypothesis=g,
                transcript=transcript,
                mistakes=learner.mistakes,
                rounds=rounds,
                kappa_flip_fraction=flip_frac,
                density_estimate=res.estimate,
            )
        if rounds >= cfg.max_rounds:
            raise BudgetExhaustedError(
                f"round budget {cfg.max_rounds} exhausted", transcript
            )
        key = learner.weights.tobytes()
        if neg_sampler is None or key != neg_key:
            neg_sampler = PtfSampler(
                g, cfg.sample_eps, tau=cfg.sample_tau, floor=0.0
            )
            neg_key = key
        x = neg_sampler.sample(rng.derive(rounds))
        xd = _round_kappa(x, cfg.kappa)
        feed(x, feature_map(xd), feature_map(x), -1, "neg_feed", rounds)
        rounds += 1


def _rejection_positives(f: QuadraticForm, rng: Rng, chunk: int = 1 << 15):
    def source(k: int, _state={"i": 0}) -> np.ndarray:
        out = []
        got = 0
        while got < k:
            g = rng.derive(10_000 + _state["i"]).normal(size=(chunk, f.n))
            _state["i"] += 1
            keep = np.asarray(sign_at(f, g)) == 1
            pts = g[keep]
            if pts.size:
                out.append(pts)
                got += pts.shape[0]
            if _state["i"] > 40_000:
                raise RuntimeError("positive rejection sampling starved")
        return np.concatenate(out)[:k]

    return source


def planted_experiment(
    f: QuadraticForm,
    cfg: DensifierConfig,
    rng: Rng,
    n_validation: int = 4000,
    transcript_path: str | None = None,
) -> dict:
    """End-to-end run against a known target: generate positives, densify,
    then measure (a) how much of the target's mass the hypothesis covers and
    (b) how dense the target is inside the hypothesis, both by Monte Carlo.
    The transcript can optionally be written out as JSON lines.
    """
    count_res = count_ptf_gaussian(f, cfg.eps / 3.0, floor=0.0)
    p_est = count_res.estimate
    if p_est <= 0.0:
        raise ValueError("target has no measurable positive region")
    p_hat = min(p_est * (1.0 + cfg.eps / 3.0), 1.0)
    cfg = replace(cfg, p_hat=p_hat)

    if p_est >= 1e-4:
        pos = _rejection_positives(f, rng.derive(1))
    else:
        sampler = PtfSampler(f, cfg.eps, floor=0.0)

        def pos(k: int) -> np.ndarray:
            return sampler.sample_batch(k, rng.derive(2), exact_filter=True)

    result = densify(pos, cfg, rng.derive(3), f_oracle=lambda pts: sign_at(f, pts))
    if transcript_path:
        with open(transcript_path, "w", encoding="utf-8") as fh:
            fh.write(result.transcript_jsonl() + "\n")
    g = result.hypothesis
    cfg_r = cfg.resolve(f.n)

    # (a) coverage of the target's conditioned distribution by g
    fresh = pos(n_validation)
    agree = float(np.mean(np.asarray(sign_at(g, fresh)) == 1))
    agree_ci = 2.576 * math.sqrt(max(agree * (1 - agree), 0.0) / n_validation)

    # (b) density of the target inside g's region
    g_mass, _ = mc_count(g, 1 << 16, rng.derive(4))
    if g_mass >= 1e-2:
        got = []
        need = n_validation
        i = 0
        while need > 0:
            draw = rng.derive(50_000 + i).normal(size=(1 << 15, f.n))
            i += 1
            keep = draw[np.asarray(sign_at(g, draw)) == 1]
            if keep.size:
                got.append(keep)
                need -= keep.shape[0]
            if i > 20_000:
                raise RuntimeError("hypothesis rejection sampling starved")
        neg_pool = np.concatenate(got)[:n_validation]
    else:
        g_sampler = PtfSampler(g, cfg.eps, floor=0.0)
        neg_pool = g_sampler.sample_batch(n_validation, rng.derive(5))
    density = float(np.mean(np.asarray(sign_at(f, neg_pool)) == 1))
    density_ci = 2.576 * math.sqrt(max(density * (1 - density), 0.0) / n_validation)

    return {
        "n": f.n,
        "p_estimate": p_est,
        "p_hat": p_hat,
        "mistakes": result.mistakes,
        "rounds": result.rounds,
        "gamma": cfg_r.gamma,
        "mistake_budget": cfg_r.mistake_budget,
        "agreement": agree,
        "agreement_ci": agree_ci,
        "density": density,
        "density_ci": density_ci,
        "kappa_flip_fraction": result.kappa_flip_fraction,
        "passed_a": agree >= 1.0 - 2.0 * cfg.eps,
        "passed_b": density >= cfg_r.gamma,
        "transcript_events": len(result.transcript),
    }
