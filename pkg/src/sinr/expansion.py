"""Growing a secret function into a larger stego function.

Three strategies. Horizontal appends layers after the secret, whose former
output becomes an internal bottleneck (widths: secret ++ appended). Vertical
keeps the layer count and widens every hidden layer, sharing both input and
output with the cover signal. Mixed appends a fresh output layer first, then
widens all hidden layers, including the secret's former output layer.

The stego key records where the secret's neurons sit; keygen draws those
positions uniformly without replacement from the plan's placement seed.
Horizontal placement is fixed (the secret occupies the leading prefix), so
its key ignores the seed.

Embedding initializes the stego function from a separate seed and overwrites
the keyed positions with the secret's values verbatim, so recovery with the
same key returns them bit-for-bit. Cross-connections between secret and
cover neurons stay trainable (only both-endpoints-secret weights freeze),
which changes the secret neurons' role inside the stego forward pass but
never the stored values recovery reads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .model import (
    FunctionSpec,
    ModelFile,
    ParameterMask,
    Role,
    StegoKey,
    Strategy,
    init_params,
    mask_from_key,
    param_count,
    pinned_rng,
    secret_layout,
)
from .numerics import ParameterSet
from .recovery import recover


@dataclass(frozen=True)
class ExpansionPlan:
    """Target structure for an expansion: strategy, full stego widths, and
    the seed that places secret neurons within each carrying layer."""

    strategy: Strategy
    stego_widths: tuple[int, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "stego_widths", tuple(int(w) for w in self.stego_widths))

    def validate(self, secret: FunctionSpec) -> None:
        s = secret.layer_widths
        g = self.stego_widths
        if any(w < 1 for w in g):
            raise StructuralError(f"stego widths must be positive, got {list(g)}")
        if g[0] != s[0]:
            raise StructuralError(
                f"stego input width {g[0]} must match the secret's {s[0]} (shared input)"
            )
        if self.strategy is Strategy.VERTICAL:
            if len(g) != len(s):
                raise StructuralError(
                    f"vertical expansion keeps the layer count: secret has {len(s)} "
                    f"layers, plan has {len(g)}"
                )
            if g[-1] != s[-1]:
                raise StructuralError(
                    f"stego output width {g[-1]} must match the secret's {s[-1]} "
                    "(vertical shares the output layer)"
                )
            narrow = [i + 1 for i in range(1, len(s) - 1) if g[i] < s[i]]
            if narrow:
                raise StructuralError(
                    f"stego layer {narrow[0]} is narrower than the secret layer it must hold"
                )
        elif self.strategy is Strategy.HORIZONTAL:
            if len(g) < len(s) + 1:
                raise StructuralError("horizontal expansion must append at least one layer")
            if g[: len(s)] != s:
                raise StructuralError(
                    f"horizontal stego widths must start with the secret's widths "
                    f"{list(s)}, got {list(g[:len(s)])}"
                )
        elif self.strategy is Strategy.MIXED:
            if len(g) != len(s) + 1:
                raise StructuralError(
                    "mixed expansion appends exactly one output layer: expected "
                    f"{len(s) + 1} widths, got {len(g)}"
                )
            narrow = [i + 1 for i in range(1, len(s)) if g[i] < s[i]]
            if narrow:
                raise StructuralError(
                    f"stego layer {narrow[0]} is narrower than the secret layer it must hold"
                )
        else:  # pragma: no cover - enum is closed
            raise StructuralError(f"unknown strategy {self.strategy}")

    def stego_spec(self, secret: FunctionSpec) -> FunctionSpec:
        """The stego structure; activation and input encoding carry over."""
        self.validate(secret)
        return FunctionSpec(
            layer_widths=self.stego_widths,
            activation=secret.activation,
            rff=secret.rff,
        )


def expansion_rate(secret: FunctionSpec, stego: FunctionSpec) -> float:
    """Stego-to-secret parameter count ratio e = N_stego / N_secret."""
    return param_count(stego) / param_count(secret)


def keygen(secret: FunctionSpec, plan: ExpansionPlan) -> StegoKey:
    """Draw a stego key for the plan: secret positions per carrying layer.

    Positions are sampled uniformly without replacement and recorded in
    ascending order. Horizontal carries the secret as a fixed leading
    prefix, so every carried layer is all ones regardless of the seed.
    """
    plan.validate(secret)
    g = plan.stego_widths
    s = secret.layer_widths
    rng = pinned_rng(plan.seed)
    bits = [np.zeros(w, dtype=bool) for w in g]

    if plan.strategy is Strategy.HORIZONTAL:
        for l in range(1, len(s)):
            bits[l][:] = True  # carried prefix: widths match the secret exactly
    else:
        # Vertical carries s[1:-1] in stego layers 1..H; mixed also carries
        # the former output s[-1] in stego layer H+1.
        carried = s[1:-1] if plan.strategy is Strategy.VERTICAL else s[1:]
        for l, width in enumerate(carried, start=1):
            chosen = np.sort(rng.choice(g[l], size=width, replace=False))
            bits[l][chosen] = True
    return StegoKey(strategy=plan.strategy, layer_bits=bits, shared_io=True)


@dataclass
class StegoScaffold:
    """An untrained stego function: structure, parameters, and its mask."""

    spec: FunctionSpec
    params: ParameterSet
    mask: ParameterMask

    def model(self) -> ModelFile:
        return ModelFile(spec=self.spec, role=Role.STEGO, params=self.params)


def embed(
    secret: ModelFile,
    key: StegoKey,
    init_seed: int,
    plan: ExpansionPlan | None = None,
) -> StegoScaffold:
    """Build a stego scaffold containing the secret at the key's positions.

    The stego structure is fully determined by the key (its bitstring
    lengths are the stego widths); a plan, when given, is cross-checked
    against the key. All non-secret parameters come from a fresh seeded
    initialization. The scaffold is verified before return: recovering it
    with the same key must yield the secret's parameters exactly.
    """
    if plan is not None:
        plan.validate(secret.spec)
        if plan.strategy is not key.strategy:
            raise StructuralError(
                f"plan strategy {plan.strategy.value} != key strategy {key.strategy.value}"
            )
        if tuple(key.widths()) != plan.stego_widths:
            raise StructuralError(
                f"key widths {key.widths()} != plan widths {list(plan.stego_widths)}"
            )
    stego_spec = FunctionSpec(
        layer_widths=tuple(key.widths()),
        activation=secret.spec.activation,
        rff=secret.spec.rff,
    )
    layout = secret_layout(key, stego_spec)
    if layout.secret_widths != secret.spec.layer_widths:
        raise StructuralError(
            f"key popcounts reconstruct structure {list(layout.secret_widths)}, "
            f"secret is {list(secret.spec.layer_widths)}"
        )
    params = init_params(stego_spec, init_seed)
    for l in range(layout.num_weight_layers):
        rows = layout.indices[l + 1]
        cols = layout.indices[l]
        params.weights[l][np.ix_(rows, cols)] = secret.params.weights[l]
        params.biases[l][rows] = secret.params.biases[l]
    scaffold = StegoScaffold(
        spec=stego_spec, params=params, mask=mask_from_key(key, stego_spec)
    )

    inside = recover(scaffold.model(), key)
    same = all(
        np.array_equal(a, b)
        for a, b in zip(inside.params.weights, secret.params.weights)
    ) and all(
        np.array_equal(a, b) for a, b in zip(inside.params.biases, secret.params.biases)
    )
    if not same:
        raise StructuralError("embedding self-check failed: recovery does not match secret")
    return scaffold
