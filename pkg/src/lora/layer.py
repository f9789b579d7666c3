"""
Low-rank adaptation of a single dense layer.

The frozen weight W (d_out x d_in) is adapted by trainable factors
B (d_out x r) and A (r x d_in), giving the effective weight W' = W + BA.
No alpha/r scaling is applied. Everything is float64.
"""

import enum

import torch

DTYPE = torch.float64

RANK_GRID = (8, 16, 32, 64)


class AdaptationTarget(enum.Enum):
    """Which layers of a transformer a checkpoint's adapters were attached to."""
    QKVO = ("q_proj", "k_proj", "v_proj", "o_proj")
    ALL_LINEAR = ("q_proj", "k_proj", "v_proj", "o_proj",
                  "down_proj", "up_proj", "lm_head")

    @property
    def layers(self):
        return self.value

    @classmethod
    def parse(cls, value):
        """Accept a member or its name in any case, e.g. "qkvo" or "all-linear"."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError("adaptation must be one of {}, got {!r}"
                             .format([t.name for t in cls], value)) from None


class LoraLayer:
    """
    Args:
    - W: [d_out, d_in] frozen weight.
    - A: [r, d_in] trainable down-projection.
    - B: [d_out, r] trainable up-projection.
    - allow_full_rank: skip the r < min(d_in, d_out) check (degenerate
      identity tests only).
    """

    def __init__(self, W, A, B, allow_full_rank=False):
        if len(W.shape) != 2 or len(A.shape) != 2 or len(B.shape) != 2:
            raise ValueError("W, A and B must be 2D.")
        d_out, d_in = W.shape
        r = A.shape[0]
        if A.shape[1] != d_in:
            raise ValueError("A must have shape [r, {}], got {}".format(d_in, list(A.shape)))
        if list(B.shape) != [d_out, r]:
            raise ValueError("B must have shape [{}, {}], got {}"
                             .format(d_out, r, list(B.shape)))
        if r < 1:
            raise ValueError("rank must be >= 1")
        if not allow_full_rank and r >= min(d_in, d_out):
            raise ValueError("rank {} must be < min(d_in, d_out) = {}"
                             .format(r, min(d_in, d_out)))
        self.W = W
        self.A = A
        self.B = B

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def d_in(self):
        return self.W.shape[1]

    @property
    def d_out(self):
        return self.W.shape[0]

    def with_factors(self, A, B):
        """A new layer sharing this layer's W."""
        return LoraLayer(self.W, A, B, allow_full_rank=True)

    def trainable_parameter_count(self):
        return self.A.numel() + self.B.numel()


def init_layer(d_in, d_out, r, seed, W=None):
    """
    W ~ N(0, 1/d_in) unless given, A ~ N(0, 1/d_in), B = 0, so the adapted
    layer starts out identical to the frozen one.
    """
    generator = torch.Generator().manual_seed(seed)
    if W is None:
        W = torch.randn(d_out, d_in, generator=generator, dtype=DTYPE) / d_in ** 0.5
    A = torch.randn(r, d_in, generator=generator, dtype=DTYPE) / d_in ** 0.5
    B = torch.zeros(d_out, r, dtype=DTYPE)
    return LoraLayer(W, A, B)


def random_layer(d_in, d_out, r, seed):
    """Layer with every factor random (non-zero B), for gradient checks.

    Factors are scaled so logits of unit-variance inputs stay O(1).
    """
    generator = torch.Generator().manual_seed(seed)
    W = torch.randn(d_out, d_in, generator=generator, dtype=DTYPE) / d_in ** 0.5
    A = torch.randn(r, d_in, generator=generator, dtype=DTYPE) / d_in ** 0.5
    B = torch.randn(d_out, r, generator=generator, dtype=DTYPE) / r ** 0.5
    return LoraLayer(W, A, B)


def forward(layer, x):
    """
    Computes (W + BA) x as W x + B (A x).

    Args:
    - layer: LoraLayer.
    - x: [d_in] vector or [batch_size, d_in] batch.

    Returns:
    - [d_out] or [batch_size, d_out].
    """
    if x.shape[-1] != layer.d_in:
        raise ValueError("x must have last dimension {}, got {}"
                         .format(layer.d_in, list(x.shape)))
    if len(x.shape) == 1:
        return torch.mv(layer.W, x) + torch.mv(layer.B, torch.mv(layer.A, x))
    if len(x.shape) == 2:
        return x @ layer.W.T + (x @ layer.A.T) @ layer.B.T
    raise ValueError("x must be 1D or 2D, got {}D".format(len(x.shape)))


def merged_weight(layer):
    return layer.W + layer.B @ layer.A


def param_count(d_in, d_out, r):
    """
    Returns:
    - (trainable, full, ratio): r * (d_in + d_out) adapter parameters,
      d_in * d_out dense parameters, and trainable / full.
    """
    if d_in < 1 or d_out < 1 or r < 1:
        raise ValueError("Dimensions and rank must be positive.")
    trainable = r * (d_in + d_out)
    full = d_in * d_out
    return trainable, full, trainable / full


def param_report(d_in, d_out, ranks=RANK_GRID):
    """Rows of (r, trainable, full, ratio) for each rank."""
    return [(r,) + param_count(d_in, d_out, r) for r in ranks]
