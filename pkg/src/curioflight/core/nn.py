"""Small tanh MLPs with exact reverse-mode gradients and Adam.

Weights are stored (fan_in, fan_out) and applied to row batches, ``y = x @ W + b``.
An architecture may split its input: the leading columns feed the first layer
and the trailing ``skip_size`` columns are concatenated to the first hidden
activation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.typing import NDArray

from curioflight.core.env import ACTION_SIZE, AUX_SIZE, OBSERVATION_SIZE, Observation
from curioflight.core.errors import NumericalError, ShapeError

FloatArray = NDArray[np.float64]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
POLICY_OUTPUT_GAIN = 0.01
_HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpArch:
    """Shape of a fully connected tanh network."""

    input_size: int
    hidden_sizes: tuple[int, ...]
    output_size: int
    skip_size: int = 0
    output_gain: float = 1.0

    def __post_init__(self) -> None:
        if self.skip_size and not self.hidden_sizes:
            raise ShapeError("A skip input needs at least one hidden layer")
        if not 0 <= self.skip_size < self.input_size:
            raise ShapeError(f"skip_size {self.skip_size} must be below input_size {self.input_size}")

    @property
    def num_layers(self) -> int:
        return len(self.hidden_sizes) + 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        sizes = [self.input_size - self.skip_size, *self.hidden_sizes, self.output_size]
        shapes = []
        for index in range(self.num_layers):
            fan_in = sizes[index] + (self.skip_size if index == 1 else 0)
            shapes.append((fan_in, sizes[index + 1]))
        return shapes


def policy_arch(hidden_sizes: tuple[int, ...]) -> MlpArch:
    return MlpArch(
        input_size=OBSERVATION_SIZE,
        hidden_sizes=tuple(hidden_sizes),
        output_size=ACTION_SIZE,
        skip_size=AUX_SIZE,
        output_gain=POLICY_OUTPUT_GAIN,
    )


def value_arch(hidden_sizes: tuple[int, ...]) -> MlpArch:
    return MlpArch(
        input_size=OBSERVATION_SIZE,
        hidden_sizes=tuple(hidden_sizes),
        output_size=1,
        skip_size=AUX_SIZE,
    )


@dataclass
class MlpParams:
    """Named tensors plus their Adam moments and step counter."""

    tensors: dict[str, FloatArray]
    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self) -> None:
        for name, tensor in self.tensors.items():
            self.m.setdefault(name, np.zeros_like(tensor))
            self.v.setdefault(name, np.zeros_like(tensor))

    def __getitem__(self, name: str) -> FloatArray:
        return self.tensors[name]

    def copy(self) -> MlpParams:
        return MlpParams(
            tensors={k: t.copy() for k, t in self.tensors.items()},
            m={k: t.copy() for k, t in self.m.items()},
            v={k: t.copy() for k, t in self.v.items()},
            step=self.step,
        )

    def restore(self, snapshot: MlpParams) -> None:
        """Overwrite this instance in place with a snapshot taken by copy()."""
        restored = snapshot.copy()
        self.tensors, self.m, self.v, self.step = restored.tensors, restored.m, restored.v, restored.step

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(t.shape) for name, t in self.tensors.items()}


def clone_params(params: MlpParams) -> MlpParams:
    return params.copy()


def _orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> FloatArray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(
    arch: MlpArch,
    rng: np.random.Generator,
    log_std: float | None = None,
) -> MlpParams:
    """Orthogonal weights (gain 1 hidden, ``arch.output_gain`` last), zero biases.

    Args:
        arch: Network shape.
        rng: Source of the random weights.
        log_std: When given, adds a state-independent ``log_std`` vector of
            this value (Gaussian policies).

    Returns:
        Fresh parameters with zeroed Adam state.

    """
    tensors: dict[str, FloatArray] = {}
    for index, shape in enumerate(arch.layer_shapes()):
        gain = arch.output_gain if index == arch.num_layers - 1 else 1.0
        tensors[f"w{index}"] = _orthogonal(shape, gain, rng)
        tensors[f"b{index}"] = np.zeros(shape[1])
    if log_std is not None:
        tensors["log_std"] = np.full(arch.output_size, float(log_std))
    return MlpParams(tensors=tensors)


def zero_params(arch: MlpArch, log_std: float | None = None) -> MlpParams:
    tensors: dict[str, FloatArray] = {}
    for index, shape in enumerate(arch.layer_shapes()):
        tensors[f"w{index}"] = np.zeros(shape)
        tensors[f"b{index}"] = np.zeros(shape[1])
    if log_std is not None:
        tensors["log_std"] = np.full(arch.output_size, float(log_std))
    return MlpParams(tensors=tensors)


@dataclass(frozen=True)
class ForwardCache:
    """Layer inputs and tanh outputs of one forward pass."""

    layer_inputs: list[FloatArray]
    activations: list[FloatArray]


def _layer_name(arch: MlpArch, index: int) -> str:
    return "output" if index == arch.num_layers - 1 else f"hidden{index}"


def forward(params: MlpParams, arch: MlpArch, x) -> tuple[FloatArray, ForwardCache]:
    """Run a row batch through the network.

    Raises:
        ShapeError: input width does not match the architecture.
        NumericalError: a layer produced non-finite values; the message names it.

    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != arch.input_size:
        raise ShapeError(f"Expected input width {arch.input_size}, got {x.shape[1]}")
    split = arch.input_size - arch.skip_size
    h, skip = x[:, :split], x[:, split:]

    layer_inputs: list[FloatArray] = []
    activations: list[FloatArray] = []
    for index in range(arch.num_layers):
        layer_inputs.append(h)
        z = h @ params[f"w{index}"] + params[f"b{index}"]
        if index == arch.num_layers - 1:
            h = z
        else:
            h = np.tanh(z)
            activations.append(h)
            if index == 0 and arch.skip_size:
                h = np.concatenate([h, skip], axis=1)
        if not np.all(np.isfinite(h)):
            raise NumericalError(f"Non-finite activations in layer '{_layer_name(arch, index)}'")
    return h, ForwardCache(layer_inputs=layer_inputs, activations=activations)


def backward(
    params: MlpParams,
    arch: MlpArch,
    cache: ForwardCache | None,
    grad_y,
) -> tuple[dict[str, FloatArray], FloatArray]:
    """Gradients of a scalar loss given dLoss/dy for every row of the batch.

    Args:
        params: Parameters used for the forward pass.
        arch: Network shape.
        cache: Cache returned by forward() for the same batch.
        grad_y: dLoss/dy, shape (batch, output_size).

    Returns:
        Gradient per weight/bias tensor and the gradient w.r.t. the input.

    """
    if cache is None or not cache.layer_inputs:
        raise NumericalError("backward() needs the cache of a completed forward pass")
    g = np.atleast_2d(np.asarray(grad_y, dtype=np.float64))
    batch = cache.layer_inputs[0].shape[0]
    if g.shape != (batch, arch.output_size):
        raise ShapeError(f"grad_y shape {g.shape} does not match output {(batch, arch.output_size)}")

    grads: dict[str, FloatArray] = {}
    grad_skip = np.zeros((batch, arch.skip_size))
    for index in reversed(range(arch.num_layers)):
        w = params[f"w{index}"]
        grads[f"w{index}"] = cache.layer_inputs[index].T @ g
        grads[f"b{index}"] = g.sum(axis=0)
        g_in = g @ w.T
        if index == 0:
            break
        width = arch.hidden_sizes[index - 1]
        if index == 1 and arch.skip_size:
            grad_skip = g_in[:, width:]
            g_in = g_in[:, :width]
        g = g_in * (1.0 - np.square(cache.activations[index - 1]))
    grad_x = np.concatenate([g_in, grad_skip], axis=1)
    return grads, grad_x


def adam_step(
    params: MlpParams,
    grads: dict[str, FloatArray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> MlpParams:
    """Bias-corrected Adam, in place; tensors without a gradient are left alone."""
    for name, grad in grads.items():
        if name not in params.tensors:
            raise ShapeError(f"Gradient for unknown tensor '{name}'")
        if grad.shape != params.tensors[name].shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} does not match tensor '{name}' {params.tensors[name].shape}",
            )
    params.step += 1
    correction1 = 1.0 - beta1 ** params.step
    correction2 = 1.0 - beta2 ** params.step
    for name, grad in grads.items():
        params.m[name] = beta1 * params.m[name] + (1.0 - beta1) * grad
        params.v[name] = beta2 * params.v[name] + (1.0 - beta2) * np.square(grad)
        m_hat = params.m[name] / correction1
        v_hat = params.v[name] / correction2
        params.tensors[name] = params.tensors[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


@dataclass(frozen=True)
class PolicyOutput:
    action_mean: FloatArray
    log_std: FloatArray

    @property
    def std(self) -> FloatArray:
        return np.exp(self.log_std)


@dataclass(frozen=True)
class ValueHeads:
    v_ext: FloatArray
    v_int: FloatArray


def _as_batch(obs) -> tuple[FloatArray, bool]:
    if isinstance(obs, Observation):
        obs = obs.vector
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    if not np.all(np.isfinite(x)):
        raise NumericalError("Non-finite observation")
    return np.atleast_2d(x), single


def clamped_log_std(params: MlpParams) -> FloatArray:
    return np.clip(params["log_std"], LOG_STD_MIN, LOG_STD_MAX)


def forward_policy(params: MlpParams, arch: MlpArch, obs) -> PolicyOutput:
    """Action mean and clamped log std for one observation or a row batch."""
    x, single = _as_batch(obs)
    mean, _ = forward(params, arch, x)
    return PolicyOutput(action_mean=mean[0] if single else mean, log_std=clamped_log_std(params))


def forward_values(params_ext: MlpParams, params_int: MlpParams, arch: MlpArch, obs) -> ValueHeads:
    x, single = _as_batch(obs)
    v_ext, _ = forward(params_ext, arch, x)
    v_int, _ = forward(params_int, arch, x)
    if single:
        return ValueHeads(v_ext=v_ext[0, 0], v_int=v_int[0, 0])
    return ValueHeads(v_ext=v_ext[:, 0], v_int=v_int[:, 0])


def log_prob_and_entropy(out: PolicyOutput, action) -> tuple[FloatArray, float]:
    """Diagonal Gaussian log density of ``action`` and the distribution entropy."""
    action = np.asarray(action, dtype=np.float64)
    std = np.exp(out.log_std)
    z = (action - out.action_mean) / std
    k = out.log_std.shape[-1]
    log_prob = -0.5 * np.sum(np.square(z), axis=-1) - np.sum(out.log_std) - 0.5 * k * _LOG_2PI
    entropy = float(np.sum(out.log_std) + k * _HALF_LOG_2PI_E)
    return log_prob, entropy


def gaussian_log_prob_grads(out: PolicyOutput, action) -> tuple[FloatArray, FloatArray]:
    """d log_prob / d mean per row and d log_prob / d log_std per row."""
    action = np.asarray(action, dtype=np.float64)
    z = (action - out.action_mean) / np.exp(out.log_std)
    return z / np.exp(out.log_std), np.square(z) - 1.0


def sample_action(out: PolicyOutput, rng: np.random.Generator) -> FloatArray:
    """Raw (pre-squash) action drawn from the policy Gaussian."""
    noise = rng.standard_normal(np.shape(out.action_mean))
    return out.action_mean + np.exp(out.log_std) * noise


def squash(raw) -> FloatArray:
    return np.tanh(raw)


def gradient_check(
    loss_fn,
    params: MlpParams,
    grads: dict[str, FloatArray],
    rng: np.random.Generator,
    h: float = 1e-5,
    entries_per_tensor: int = 5,
) -> float:
    """Largest relative gap between analytic gradients and central differences.

    ``loss_fn`` is called with no arguments and must read ``params`` in place.
    A few random entries of every tensor in ``grads`` are checked.
    """
    worst = 0.0
    for name, grad in grads.items():
        tensor = params.tensors[name]
        count = min(entries_per_tensor, tensor.size)
        for flat in rng.choice(tensor.size, size=count, replace=False):
            index = np.unravel_index(flat, tensor.shape)
            original = tensor[index]
            tensor[index] = original + h
            plus = loss_fn()
            tensor[index] = original - h
            minus = loss_fn()
            tensor[index] = original
            numeric = (plus - minus) / (2 * h)
            analytic = grad[index]
            scale = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst
