"""Feed-forward materialization of a frozen estimator run.

Given coefficient networks of a common depth and the Brownian increments of a
fixed seed, the exporter wires the whole sampled estimator, Euler recursion
included, into one explicit network: per step a block of parallel coefficient
subnetworks next to identity lanes that carry the state and the running-payoff
accumulator, with the step size and the frozen increments folded into affine
weights.  Parameter counts are tracked against the product bound
M (P_F + N [P_G + P_nu + P_tau + (d+o) D]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .coeffs import SmoothMap
from .euler import NoiseStream, TimeGrid

_ACTIVATIONS = {
    "identity": lambda y: y,
    "tanh": np.tanh,
    "relu": lambda y: np.maximum(y, 0.0),
}


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class AffineLayer:
    """One affine map y = x @ weight + bias with per-node activation tags.

    ``weight`` has shape (in_dim, out_dim); ``activation`` marks the output
    nodes the network nonlinearity is applied to, the rest pass through as
    identity nodes.
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weight", _frozen_array(self.weight))
        object.__setattr__(self, "bias", _frozen_array(self.bias))
        object.__setattr__(self, "activation", _frozen_array(self.activation, dtype=bool))
        if self.weight.ndim != 2:
            raise ValueError("layer weight must be a matrix")
        out = self.weight.shape[1]
        if self.bias.shape != (out,) or self.activation.shape != (out,):
            raise ValueError("bias and activation tags must match the output width")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


def identity_layer(dim: int) -> AffineLayer:
    return AffineLayer(np.eye(dim), np.zeros(dim), np.zeros(dim, dtype=bool))


@dataclass(frozen=True)
class NetSpec:
    """A feed-forward network: affine layers with tagged nonlinearity nodes."""

    layers: tuple[AffineLayer, ...]
    rho: str = "identity"

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a network needs at least one affine layer")
        if self.rho not in _ACTIVATIONS:
            raise ValueError(f"unknown activation tag {self.rho!r}")
        for first, second in zip(self.layers, self.layers[1:]):
            if first.out_dim != second.in_dim:
                raise ValueError(
                    f"layer widths do not compose: {first.out_dim} feeds {second.in_dim}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(layer.out_dim for layer in self.layers)

    def architecture(self) -> tuple[tuple[int, int], ...]:
        return tuple((layer.in_dim, layer.out_dim) for layer in self.layers)


def eval_network(ns: NetSpec, x) -> np.ndarray:
    """Forward pass; leading axes of x are batch axes."""
    rho = _ACTIVATIONS[ns.rho]
    y = np.asarray(x, dtype=float)
    if y.ndim == 0 or y.shape[-1] != ns.input_dim:
        raise ValueError(f"expected trailing axis of size {ns.input_dim}")
    for layer in ns.layers:
        y = y @ layer.weight + layer.bias
        if layer.activation.any():
            y = np.where(layer.activation, rho(y), y)
    return y


def param_count(ns: NetSpec) -> int:
    """Number of non-zero weight and bias entries."""
    return int(
        sum(np.count_nonzero(l.weight) + np.count_nonzero(l.bias) for l in ns.layers)
    )


def collapse_identity_layers(ns: NetSpec) -> NetSpec:
    """Merge each all-identity layer into its successor; output is unchanged.

    Composing the two affines can densify the weights, so the collapsed
    network trades the parameter count for depth.
    """
    merged: list[AffineLayer] = []
    for layer in ns.layers:
        if merged and not merged[-1].activation.any():
            prev = merged.pop()
            layer = AffineLayer(
                prev.weight @ layer.weight,
                prev.bias @ layer.weight + layer.bias,
                layer.activation,
            )
        merged.append(layer)
    return NetSpec(tuple(merged), rho=ns.rho)


def network_map(ns: NetSpec) -> SmoothMap:
    """View a network as an order-0 coefficient map for the simulator."""
    return SmoothMap(
        input_dim=ns.input_dim,
        output_dim=ns.output_dim,
        max_order=0,
        evaluator=lambda t, x, k: eval_network(ns, x),
    )


def to_json(ns: NetSpec) -> str:
    """Self-describing layout: version, activation tag, then per layer the
    weight rows (in_dim lists of out_dim floats), the bias, and the boolean
    activation tags, all in layer order."""
    payload = {
        "format": "mceuler-net",
        "version": 1,
        "rho": ns.rho,
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation.tolist(),
            }
            for layer in ns.layers
        ],
    }
    return json.dumps(payload, indent=2)


def from_json(text: str) -> NetSpec:
    payload = json.loads(text)
    if payload.get("format") != "mceuler-net" or payload.get("version") != 1:
        raise ValueError("not a version-1 network payload")
    layers = tuple(
        AffineLayer(entry["weight"], entry["bias"], entry["activation"])
        for entry in payload["layers"]
    )
    return NetSpec(layers, rho=payload["rho"])


def _common_rho(nets) -> str:
    tags = {ns.rho for ns in nets if any(l.activation.any() for l in ns.layers)}
    if len(tags) > 1:
        raise ValueError(f"coefficient networks mix activation tags {sorted(tags)}")
    return tags.pop() if tags else "identity"


def _as_tuple(nets, steps: int, name: str) -> tuple[NetSpec, ...]:
    if isinstance(nets, NetSpec):
        return (nets,) * steps
    nets = tuple(nets)
    if len(nets) != steps:
        raise ValueError(f"need one {name} network per step, got {len(nets)}")
    return nets


@dataclass(frozen=True)
class FrozenRealization:
    """One sampled estimator run with its noise materialized as constants.

    ``increments`` holds the Brownian increments of samples 0..M-1 on the
    step grid; they must reproduce the keyed noise stream of ``seed``
    bitwise, which pins the realization to the simulator it mirrors.
    """

    seed: int
    samples_M: int
    steps_N: int
    horizon_T: float
    increments: np.ndarray
    f_net: NetSpec
    g_nets: tuple[NetSpec, ...]
    mu_nets: tuple[NetSpec, ...]
    sigma_nets: tuple[NetSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "increments", _frozen_array(self.increments))
        object.__setattr__(self, "g_nets", tuple(self.g_nets))
        object.__setattr__(self, "mu_nets", tuple(self.mu_nets))
        object.__setattr__(self, "sigma_nets", tuple(self.sigma_nets))
        if self.samples_M < 1 or self.steps_N < 1:
            raise ValueError("need at least one sample and one step")
        if self.increments.ndim != 3:
            raise ValueError("increments must have shape (M, N, noise_dim)")
        d = self.state_dim
        o = self.output_dim
        depth = self.f_net.depth
        named = (("g", self.g_nets), ("mu", self.mu_nets), ("sigma", self.sigma_nets))
        for name, nets in named:
            if len(nets) != self.steps_N:
                raise ValueError(f"need one {name} network per step")
            if any(ns.architecture() != nets[0].architecture() for ns in nets):
                raise ValueError(f"{name} architecture varies across steps")
            if any(ns.depth != depth for ns in nets):
                raise ValueError("coefficient networks must share one depth")
        shapes = {
            "f": (self.f_net, d, o),
            "g": (self.g_nets[0], d, o),
            "mu": (self.mu_nets[0], d, d),
            "sigma": (self.sigma_nets[0], d, d * self.noise_dim),
        }
        for name, (ns, want_in, want_out) in shapes.items():
            if ns.input_dim != want_in or ns.output_dim != want_out:
                raise ValueError(
                    f"{name} network maps {ns.input_dim}->{ns.output_dim}, "
                    f"expected {want_in}->{want_out}"
                )
        if self.increments.shape != (self.samples_M, self.steps_N, self.noise_dim):
            raise ValueError("increments must have shape (M, N, noise_dim)")
        grid = TimeGrid(0.0, self.horizon_T, self.steps_N)
        expected = math.sqrt(grid.dt) * NoiseStream(self.seed).standard_normal_block(
            0, self.samples_M, self.steps_N, self.noise_dim
        )
        if not np.array_equal(self.increments, expected):
            raise ValueError("increments do not reproduce the keyed noise stream")

    @property
    def state_dim(self) -> int:
        return self.mu_nets[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.f_net.output_dim

    @property
    def noise_dim(self) -> int:
        return self.increments.shape[2]

    @property
    def depth_D(self) -> int:
        return self.f_net.depth


def freeze_realization(
    seed: int,
    M: int,
    N: int,
    horizon_T: float,
    f_net: NetSpec,
    g_nets,
    mu_nets,
    sigma_nets,
    noise_dim: int | None = None,
) -> FrozenRealization:
    """Draw the increments for (seed, 0..M-1, 0..N-1) and pin the networks."""
    mu = _as_tuple(mu_nets, N, "mu")
    sigma = _as_tuple(sigma_nets, N, "sigma")
    d = mu[0].input_dim
    q = noise_dim if noise_dim is not None else sigma[0].output_dim // max(d, 1)
    grid = TimeGrid(0.0, horizon_T, N)
    dw = math.sqrt(grid.dt) * NoiseStream(seed).standard_normal_block(0, M, N, q)
    return FrozenRealization(
        seed=seed,
        samples_M=M,
        steps_N=N,
        horizon_T=horizon_T,
        increments=dw,
        f_net=f_net,
        g_nets=_as_tuple(g_nets, N, "g"),
        mu_nets=mu,
        sigma_nets=sigma,
    )


def count_bound(fr: FrozenRealization) -> int:
    """The product bound M (P_F + N [P_G + P_nu + P_tau + (d+o) D])."""
    per_step = (
        max(param_count(ns) for ns in fr.g_nets)
        + max(param_count(ns) for ns in fr.mu_nets)
        + max(param_count(ns) for ns in fr.sigma_nets)
        + (fr.state_dim + fr.output_dim) * fr.depth_D
    )
    return fr.samples_M * (param_count(fr.f_net) + fr.steps_N * per_step)


class _LayerAssembler:
    """Collects row groups of one affine layer of the export."""

    def __init__(self, in_dim: int) -> None:
        self.in_dim = in_dim
        self.cols: list[np.ndarray] = []
        self.bias: list[np.ndarray] = []
        self.tags: list[np.ndarray] = []

    def add(self, blocks, bias, tags=None) -> None:
        """blocks: (row_offset, matrix) contributions; overlaps add up."""
        bias = np.asarray(bias, dtype=float)
        cols = np.zeros((self.in_dim, bias.shape[0]))
        for offset, matrix in blocks:
            cols[offset : offset + matrix.shape[0]] += matrix
        self.cols.append(cols)
        self.bias.append(bias)
        self.tags.append(
            np.zeros(bias.shape[0], dtype=bool) if tags is None else np.asarray(tags, dtype=bool)
        )

    def layer(self) -> AffineLayer:
        return AffineLayer(
            np.concatenate(self.cols, axis=1),
            np.concatenate(self.bias),
            np.concatenate(self.tags),
        )


def _fold_increment(weight: np.ndarray, bias: np.ndarray, dw: np.ndarray, d: int):
    """Contract a flattened-diffusion output layer with a fixed increment.

    Row-major output (a, b) is paired with dw[b]; each input entry lands in
    exactly one output column, so the non-zero count never grows.
    """
    q = dw.shape[0]
    folded_w = weight.reshape(weight.shape[0], d, q) @ dw
    folded_b = bias.reshape(d, q) @ dw
    return folded_w, folded_b


def build_mces_network(fr: FrozenRealization) -> NetSpec:
    """Wire the frozen run into one network.

    Layout: M parallel chains, each an alternation of coefficient
    subnetwork lanes with identity lanes for the state (width d) and, from
    step 1 on, the running-payoff accumulator (width o).  Every step block
    ends in a combine layer that folds the step size into the drift output
    and the frozen increment into the diffusion output; the final layer
    merges all chains, folding in the 1/M average of terminal and
    accumulated payoffs.  The step-0 block carries no accumulator lane,
    which frees exactly the identity budget the terminal block's
    accumulator lane consumes.
    """
    M, N, D = fr.samples_M, fr.steps_N, fr.depth_D
    d, o = fr.state_dim, fr.output_dim
    dt = fr.horizon_T / N
    rho = _common_rho((fr.f_net,) + fr.g_nets + fr.mu_nets + fr.sigma_nets)

    layers: list[AffineLayer] = []
    chain_in = [d] * M  # per-chain widths feeding the next layer

    def offsets() -> list[int]:
        # Until the first layer is laid down every chain reads the one
        # shared input x; afterwards each chain owns a column span.
        if not layers:
            return [0] * M
        starts, at = [], 0
        for width in chain_in:
            starts.append(at)
            at += width
        return starts

    def assembler() -> _LayerAssembler:
        return _LayerAssembler(d if not layers else sum(chain_in))

    for n in range(N):
        has_acc = n > 0
        subnets = (fr.mu_nets[n], fr.sigma_nets[n], fr.g_nets[n])
        for j in range(D - 1):
            starts = offsets()
            asm = assembler()
            next_in = []
            for m in range(M):
                at = starts[m]
                # Layer 0 lanes all read the shared state; later layers
                # read each subnet's own previous output.
                col = at
                for ns in subnets:
                    layer = ns.layers[j]
                    asm.add([(col, layer.weight)], layer.bias, layer.activation)
                    if j > 0:
                        col += layer.in_dim
                state_col = at if j == 0 else at + sum(ns.layers[j].in_dim for ns in subnets)
                asm.add([(state_col, np.eye(d))], np.zeros(d))
                if has_acc:
                    asm.add([(state_col + d, np.eye(o))], np.zeros(o))
                next_in.append(
                    sum(ns.layers[j].out_dim for ns in subnets) + d + (o if has_acc else 0)
                )
            layers.append(asm.layer())
            chain_in = next_in

        # Combine layer: new state and updated accumulator per chain.
        starts = offsets()
        asm = assembler()
        mu_l, tau_l, g_l = (ns.layers[D - 1] for ns in subnets)
        for m in range(M):
            at = starts[m]
            if D == 1:
                mu_col = tau_col = g_col = state_col = at
            else:
                mu_col = at
                tau_col = mu_col + mu_l.in_dim
                g_col = tau_col + tau_l.in_dim
                state_col = g_col + g_l.in_dim
            tau_w, tau_b = _fold_increment(tau_l.weight, tau_l.bias, fr.increments[m, n], d)
            asm.add(
                [
                    (state_col, np.eye(d)),
                    (mu_col, dt * mu_l.weight),
                    (tau_col, tau_w),
                ],
                dt * mu_l.bias + tau_b,
            )
            acc_blocks = [(g_col, dt * g_l.weight)]
            if has_acc:
                acc_blocks.append((state_col + d, np.eye(o)))
            asm.add(acc_blocks, dt * g_l.bias)
        layers.append(asm.layer())
        chain_in = [d + o] * M

    f = fr.f_net
    for j in range(D - 1):
        starts = offsets()
        asm = assembler()
        layer = f.layers[j]
        for m in range(M):
            at = starts[m]
            asm.add([(at, layer.weight)], layer.bias, layer.activation)
            asm.add([(at + layer.in_dim, np.eye(o))], np.zeros(o))
        layers.append(asm.layer())
        chain_in = [layer.out_dim + o] * M

    # Shared final layer: terminal payoff plus accumulator, averaged.
    starts = offsets()
    asm = assembler()
    f_l = f.layers[D - 1]
    blocks = []
    for m in range(M):
        at = starts[m]
        blocks.append((at, f_l.weight / M))
        blocks.append((at + f_l.in_dim, np.eye(o) / M))
    asm.add(blocks, f_l.bias)
    layers.append(asm.layer())

    return NetSpec(tuple(layers), rho=rho)
