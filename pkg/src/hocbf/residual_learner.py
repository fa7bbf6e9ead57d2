"""Learning the mismatch in the barrier's second derivative.

On the true plant the second derivative of ``h`` splits as::

    h''(x, omega) = hddot_nominal(x, omega) + Delta(x) + Sigma(x) * omega

A two-output MLP supplies ``(Delta, Sigma)``; it is fit by mean-squared error
against second-difference labels of ``h`` measured along closed-loop
rollouts, while those same rollouts are filtered with the current estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import barrier as bar
from .closed_loop import FilteredController, sample_initial_states
from .dynamics import exit_stop, goal_stop, step
from .safety_filter import HalfspaceConstraint, assemble_ecbf, assemble_hocbf

ENCODINGS = ("static", "relative")


def label_hddot(h_window, dt: float) -> float:
    """Central second difference of three consecutive samples."""
    h_prev, h_mid, h_next = h_window
    return (h_next - 2.0 * h_mid + h_prev) / (dt * dt)


def window_control(u_before: float, u_after: float) -> float:
    """Control a three-sample label actually measures.

    Under zero-order hold the window straddles two hold intervals, and the
    second difference converges to ``h''`` at the mean of the two controls,
    not at either one alone.
    """
    return 0.5 * (u_before + u_after)


def encode(spec: bar.BarrierSpec, state, t: float, encoding: str) -> np.ndarray:
    """Network input: ``(x, y, cos th, sin th)``, plus obstacle offsets for ``relative``."""
    x, y, th = state[0], state[1], state[2]
    feat = [x, y, math.cos(th), math.sin(th)]
    if encoding == "relative":
        cx, cy = spec.center_at(t)
        feat += [x - cx, y - cy]
    elif encoding != "static":
        raise ValueError(f"unknown encoding {encoding!r}")
    return np.array(feat)


def input_dim(encoding: str) -> int:
    return {"static": 4, "relative": 6}[encoding]


# --------------------------------------------------------------------------
# Replay buffer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionSample:
    """One labelled step.  ``drift``/``coeff`` are the nominal second-derivative terms."""

    features: np.ndarray
    u: float
    drift: float
    coeff: float
    label: float


class ReplayBuffer:
    """Fixed-capacity FIFO store with seeded uniform sampling (with replacement)."""

    def __init__(self, capacity: int, dim: int, seed: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.features = np.zeros((capacity, dim))
        self.u = np.zeros(capacity)
        self.drift = np.zeros(capacity)
        self.coeff = np.zeros(capacity)
        self.label = np.zeros(capacity)
        self._next = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def push(self, sample: TransitionSample) -> None:
        if not math.isfinite(sample.label):
            raise ValueError("label must be finite")
        k = self._next
        self.features[k] = sample.features
        self.u[k] = sample.u
        self.drift[k] = sample.drift
        self.coeff[k] = sample.coeff
        self.label[k] = sample.label
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, m: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, self.size, size=m)

    def batch(self, m: int) -> dict:
        idx = self.sample_indices(m)
        return {
            "features": self.features[idx],
            "u": self.u[idx],
            "drift": self.drift[idx],
            "coeff": self.coeff[idx],
            "label": self.label[idx],
        }

    def contents(self) -> dict:
        n = self.size
        return {
            "features": self.features[:n],
            "u": self.u[:n],
            "drift": self.drift[:n],
            "coeff": self.coeff[:n],
            "label": self.label[:n],
        }


# --------------------------------------------------------------------------
# Regressor
# --------------------------------------------------------------------------

class MlpRegressor:
    """Fully connected tanh network with a linear two-channel output.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``.  Channel 0 is ``Delta(x)``, channel 1 ``Sigma(x)``.
    """

    activation = "tanh"

    def __init__(self, params: list[np.ndarray]):
        self.params = [np.array(p, dtype=float) for p in params]
        if self.widths[-1] != 2:
            raise ValueError("output layer must have exactly two channels")

    @classmethod
    def initialize(cls, widths, seed: int = 0, zero_output: bool = True) -> "MlpRegressor":
        """Glorot-uniform hidden layers; a zero output layer makes the untrained
        estimator coincide with the nominal model."""
        widths = list(widths)
        rng = np.random.default_rng(seed)
        params = []
        for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            last = k == len(widths) - 2
            if last and zero_output:
                W = np.zeros((n_in, n_out))
            else:
                lim = math.sqrt(6.0 / (n_in + n_out))
                W = rng.uniform(-lim, lim, size=(n_in, n_out))
            params += [W, np.zeros(n_out)]
        return cls(params)

    @property
    def widths(self) -> list[int]:
        ws = [self.params[0].shape[0]]
        ws += [W.shape[1] for W in self.params[0::2]]
        return ws

    def copy(self) -> "MlpRegressor":
        return MlpRegressor([p.copy() for p in self.params])

    def forward(self, X) -> np.ndarray:
        a = np.atleast_2d(np.asarray(X, dtype=float))
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = a @ self.params[2 * k] + self.params[2 * k + 1]
            a = np.tanh(z) if k < n_layers - 1 else z
        return a

    def _forward_cached(self, X):
        acts = [np.atleast_2d(np.asarray(X, dtype=float))]
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = acts[-1] @ self.params[2 * k] + self.params[2 * k + 1]
            acts.append(np.tanh(z) if k < n_layers - 1 else z)
        return acts

    def backward(self, acts, d_out) -> list[np.ndarray]:
        """Parameter gradients given ``dLoss/dOutput`` for cached activations."""
        n_layers = len(self.params) // 2
        grads = [None] * len(self.params)
        delta = d_out
        for k in reversed(range(n_layers)):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.params[2 * k].T) * (1.0 - acts[k] ** 2)
        return grads


def predict_hddot(model: MlpRegressor, batch: dict, out=None) -> np.ndarray:
    out = model.forward(batch["features"]) if out is None else out
    u = batch["u"]
    return batch["drift"] + batch["coeff"] * u + out[:, 0] + out[:, 1] * u


def loss_and_gradient(model: MlpRegressor, batch: dict):
    """MSE of the estimator against labels, and its gradient w.r.t. the network.

    The nominal terms in ``batch`` are constants; only ``Delta``/``Sigma``
    depend on the parameters.
    """
    n = len(batch["label"])
    if n == 0:
        raise ValueError("empty batch")
    acts = model._forward_cached(batch["features"])
    err = predict_hddot(model, batch, acts[-1]) - batch["label"]
    loss = float(np.mean(err**2))
    g = 2.0 * err / n
    d_out = np.column_stack([g, g * batch["u"]])
    return loss, model.backward(acts, d_out)


def mse(model: MlpRegressor, batch: dict) -> float:
    return float(np.mean((predict_hddot(model, batch) - batch["label"]) ** 2))


class Adam:
    """Bias-corrected adaptive-moment optimizer acting in place on a model."""

    def __init__(self, model: MlpRegressor, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.model = model
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in model.params]
        self.v = [np.zeros_like(p) for p in model.params]
        self.t = 0

    def step(self, grads) -> None:
        if len(grads) != len(self.model.params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.model.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def adam_step(optimizer: Adam, grads) -> MlpRegressor:
    optimizer.step(grads)
    return optimizer.model


# --------------------------------------------------------------------------
# Estimator and corrected constraint
# --------------------------------------------------------------------------

@dataclass
class EstimatorModel:
    """Nominal second-derivative terms plus the learned ``(Delta, Sigma)`` correction."""

    spec: bar.BarrierSpec
    nominal: object  # SystemParams
    regressor: MlpRegressor
    encoding: str = "static"

    def remainder(self, state, t: float) -> tuple[float, float]:
        out = self.regressor.forward(encode(self.spec, state, t, self.encoding))[0]
        return float(out[0]), float(out[1])

    def estimate(self, state, t: float, omega: float) -> float:
        lb = bar.lie_bundle(self.spec, state, t, self.nominal)
        delta, sigma = self.remainder(state, t)
        return lb.hddot_drift + lb.input_coeff * omega + delta + sigma * omega

    def input_coefficient(self, state, t: float) -> float:
        lb = bar.lie_bundle(self.spec, state, t, self.nominal)
        return lb.input_coeff + self.remainder(state, t)[1]

    def corrected_constraint(self, state, t: float, law, eta=None) -> HalfspaceConstraint:
        return corrected_constraint(self, state, t, law, eta)


def corrected_constraint(estimator: EstimatorModel, state, t: float, law, eta=None) -> HalfspaceConstraint:
    """Barrier half-line with the nominal second derivative replaced by the estimate.

    ``law`` is an :class:`~barrier.EcbfGain` (``eta`` defaults to the nominal
    ``(h, h')``) or a :class:`~barrier.HocbfChain`.
    """
    delta, sigma = estimator.remainder(state, t)
    if isinstance(law, bar.HocbfChain):
        base = assemble_hocbf(bar.b_chain(law, estimator.spec, state, t, estimator.nominal))
    else:
        lb = bar.lie_bundle(estimator.spec, state, t, estimator.nominal)
        if eta is None:
            eta = np.array([lb.h, lb.hdot])
        base = assemble_ecbf(lb, law, eta)
    return HalfspaceConstraint(base.a + sigma, base.b - delta)


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 10000
    trajectories: int = 40
    steps: int = 600
    seed: int = 0
    hidden: tuple[int, ...] = (200, 200)
    # stationary std (rad/s) and correlation time (s) of the OU perturbation
    # added to the filtered control while collecting data; 0 disables it
    exploration: float = 0.0
    exploration_tau: float = 3.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("batch_size", "buffer_size", "steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.trajectories < 0:
            raise ValueError("trajectories must be nonnegative")
        if self.batch_size > self.buffer_size:
            raise ValueError("batch_size cannot exceed buffer_size")
        if any(w <= 0 for w in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.exploration < 0 or not self.exploration_tau > 0:
            raise ValueError("exploration must be >= 0 and exploration_tau > 0")


@dataclass
class TrainingResult:
    estimators: list[EstimatorModel]
    losses: list[list[float]] = field(default_factory=list)  # per barrier, per update
    infeasible_steps: int = 0
    buffers: list[ReplayBuffer] = field(default_factory=list, repr=False)


def initial_estimators(scenario, config: TrainConfig) -> list[EstimatorModel]:
    encoding = scenario.encoding
    widths = [input_dim(encoding), *config.hidden, 2]
    return [
        EstimatorModel(spec, scenario.nominal, MlpRegressor.initialize(widths, config.seed + i), encoding)
        for i, spec in enumerate(scenario.barriers)
    ]


def _labeled_steps(scenario, controller, x0, config: TrainConfig, noise_rng):
    """Run one data-collection rollout on the true plant.

    Yields ``(samples, feasible)`` once per applied control, where ``samples``
    holds one :class:`TransitionSample` per barrier for the label completed by
    that step (``None`` on the first step, which closes no window).
    """
    dt = scenario.dt
    stops = [goal_stop(scenario.goal.center, scenario.goal.half_width), exit_stop(scenario.workspace)]
    phi = math.exp(-dt / config.exploration_tau)
    kick = config.exploration * math.sqrt(1.0 - phi * phi)
    noise = config.exploration * noise_rng.standard_normal() if config.exploration else 0.0

    controller.reset()
    state, t = np.array(x0, dtype=float), 0.0
    h_prev, u_prev = None, None
    h_now = np.array([bar.h_value(b, state, t) for b in scenario.barriers])
    for j in range(config.steps):
        res = controller(t, state)
        omega = res.omega_safe
        if config.exploration:
            omega = min(max(omega + noise, -scenario.omega_max), scenario.omega_max)
            noise = phi * noise + kick * noise_rng.standard_normal()
        nxt = step(state, omega, scenario.true, dt)
        t_next = (j + 1) * dt
        h_next = np.array([bar.h_value(b, nxt, t_next) for b in scenario.barriers])
        samples = None
        if h_prev is not None:
            # the window straddles two hold intervals, so credit their mean control
            u_label = window_control(u_prev, omega)
            samples = []
            for i, spec in enumerate(scenario.barriers):
                lb = bar.lie_bundle(spec, state, t, scenario.nominal)
                samples.append(TransitionSample(
                    encode(spec, state, t, scenario.encoding), u_label,
                    lb.hddot_drift, lb.input_coeff,
                    label_hddot((h_prev[i], h_now[i], h_next[i]), dt),
                ))
        yield samples, res.feasible
        h_prev, h_now, u_prev = h_now, h_next, omega
        state, t = nxt, t_next
        if any(p(t, state, h_now) for p in stops):
            return


def collect_transitions(scenario, estimators, trajectories: int, seed: int, config: TrainConfig | None = None) -> list[dict]:
    """Labeled transitions gathered under a fixed filter, without training.

    Uses the same rollout, exploration and labeling as :func:`learn_cbf` but
    with its own seed, which makes it suitable for held-out evaluation.
    Returns one column dictionary per barrier (see :meth:`ReplayBuffer.contents`).
    """
    config = config or scenario.train
    capacity = max(1, trajectories * config.steps)
    dim = input_dim(scenario.encoding)
    stores = [ReplayBuffer(capacity, dim, seed) for _ in scenario.barriers]
    controller = FilteredController(scenario, estimators)
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(seed + 1)
    for x0 in sample_initial_states(scenario.train_region, trajectories, rng):
        for sample_set, _ in _labeled_steps(scenario, controller, x0, config, noise_rng):
            for store, sample in zip(stores, sample_set or ()):
                store.push(sample)
    return [s.contents() for s in stores]


def learn_cbf(scenario, config: TrainConfig | None = None) -> TrainingResult:
    """Collect rollouts on the true plant while fitting one estimator per barrier.

    Each of ``config.trajectories`` rollouts starts from a uniformly sampled
    state in ``scenario.train_region`` and runs up to ``config.steps`` steps
    (stopping early at the goal or the workspace edge).  Every step filters
    the nominal control with the current estimators, advances the true plant,
    stores the newly completed second-difference label, and takes one Adam
    step per barrier on a uniformly sampled batch.

    With ``config.exploration > 0`` a slowly varying Ornstein-Uhlenbeck
    perturbation is added to the filtered control (then clipped to the
    actuator box).  Without it the applied control is a function of the state
    and the split between ``Delta`` and ``Sigma`` is not identifiable.
    """
    config = config or scenario.train
    estimators = initial_estimators(scenario, config)
    dim = input_dim(scenario.encoding)
    buffers = [ReplayBuffer(config.buffer_size, dim, config.seed + 1000 + i) for i in range(len(estimators))]
    optims = [Adam(e.regressor, lr=config.learning_rate) for e in estimators]
    result = TrainingResult(estimators, [[] for _ in estimators], 0, buffers)

    rng = np.random.default_rng(config.seed)
    controller = FilteredController(scenario, estimators)
    noise_rng = np.random.default_rng(config.seed + 1)
    for x0 in sample_initial_states(scenario.train_region, config.trajectories, rng):
        for sample_set, feasible in _labeled_steps(scenario, controller, x0, config, noise_rng):
            if not feasible:
                result.infeasible_steps += 1
            for i, sample in enumerate(sample_set or ()):
                buffers[i].push(sample)
                loss, grads = loss_and_gradient(estimators[i].regressor, buffers[i].batch(config.batch_size))
                optims[i].step(grads)
                result.losses[i].append(loss)
    return result


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = "hocbf-checkpoint 1"


class CheckpointError(ValueError):
    """Unreadable checkpoint or one that does not fit the scenario."""


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def checkpoint_text(estimators, seeds) -> str:
    """Serialize one regressor block per barrier.

    Each block is a header (widths, activation, encoding, seed) followed by
    the weight and bias arrays in layer order, flattened row-major, one array
    per line.  ``repr`` floats make the round trip exact.
    """
    lines = [CHECKPOINT_MAGIC, f"barriers {len(estimators)}"]
    for i, (est, seed) in enumerate(zip(estimators, seeds)):
        reg = est.regressor
        lines += [
            f"block {i}",
            "widths " + " ".join(str(w) for w in reg.widths),
            f"activation {reg.activation}",
            f"encoding {est.encoding}",
            f"seed {int(seed)}",
        ]
        lines += [_fmt(p) for p in reg.params]
    return "\n".join(lines) + "\n"


def save_checkpoint(path, estimators, seeds) -> None:
    Path(path).write_text(checkpoint_text(estimators, seeds))


def _expect(lines, pos, key):
    if pos >= len(lines):
        raise CheckpointError(f"truncated checkpoint: expected '{key}'")
    head, _, rest = lines[pos].partition(" ")
    if head != key:
        raise CheckpointError(f"line {pos + 1}: expected '{key}', got '{head}'")
    return rest.strip()


def parse_checkpoint(text: str) -> list[dict]:
    """Decode checkpoint text into ``[{widths, activation, encoding, seed, params}]``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad header)")
    try:
        n = int(_expect(lines, 1, "barriers"))
    except ValueError:
        raise CheckpointError("line 2: barrier count is not an integer") from None
    pos, blocks = 2, []
    for i in range(n):
        _expect(lines, pos, "block")
        try:
            widths = [int(w) for w in _expect(lines, pos + 1, "widths").split()]
            seed = int(_expect(lines, pos + 4, "seed"))
        except ValueError:
            raise CheckpointError(f"block {i}: malformed widths or seed") from None
        activation = _expect(lines, pos + 2, "activation")
        encoding = _expect(lines, pos + 3, "encoding")
        if activation != MlpRegressor.activation:
            raise CheckpointError(f"block {i}: unsupported activation '{activation}'")
        pos += 5
        params = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            for shape in ((n_in, n_out), (n_out,)):
                if pos >= len(lines):
                    raise CheckpointError(f"block {i}: truncated parameter arrays")
                try:
                    flat = np.array(lines[pos].split(), dtype=float)
                except ValueError:
                    raise CheckpointError(f"line {pos + 1}: non-numeric entry") from None
                if flat.size != math.prod(shape):
                    raise CheckpointError(
                        f"line {pos + 1}: {flat.size} values do not fit shape {shape} from widths {widths}"
                    )
                params.append(flat.reshape(shape))
                pos += 1
        blocks.append(dict(widths=widths, activation=activation, encoding=encoding, seed=seed, params=params))
    if pos != len(lines):
        raise CheckpointError(f"line {pos + 1}: trailing data after {n} block(s)")
    return blocks


def load_checkpoint(path, scenario) -> list[EstimatorModel]:
    """Rebuild the per-barrier estimators for ``scenario`` from ``path``.

    Rejects checkpoints whose barrier count, encoding or layer widths differ
    from what the scenario would train.
    """
    blocks = parse_checkpoint(Path(path).read_text())
    if len(blocks) != len(scenario.barriers):
        raise CheckpointError(f"checkpoint has {len(blocks)} block(s), scenario has {len(scenario.barriers)} barrier(s)")
    expected = [input_dim(scenario.encoding), *scenario.train.hidden, 2]
    out = []
    for i, (blk, spec) in enumerate(zip(blocks, scenario.barriers)):
        if blk["encoding"] != scenario.encoding:
            raise CheckpointError(f"block {i}: encoding '{blk['encoding']}' but scenario uses '{scenario.encoding}'")
        if blk["widths"] != expected:
            raise CheckpointError(f"block {i}: widths {blk['widths']} but scenario expects {expected}")
        out.append(EstimatorModel(spec, scenario.nominal, MlpRegressor(blk["params"]), scenario.encoding))
    return out
