"""
Unrolled list-mode learned primal-dual network.

Each phase k updates the per-event dual variable with an MLP and the image with
a CNN:

    h_k = Dual_k(A f_{k-1}, g, h_{k-1})
    f_k = Primal_k(f_{k-1}, A^T h_k)

starting from f_0 = 0 and h_0 = 0, with g = 1 for every event. The projector
enters autograd through Function wrappers whose backward is the adjoint.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from .events import EventList
from .exceptions import DimensionError, InvalidConfigError, LmpdStateError
from .images import Image2D
from .projector import ProjectionContext, back_project, forward_project

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkConfig:
    n_phases: int = 8
    dual_widths: Tuple[int, ...] = (64, 16)
    primal_channels: Tuple[int, ...] = (2, 64, 128, 256, 64, 1)
    kernel_size: int = 3
    shared_weights: bool = False
    # network outputs are multiplied by this to give activity units
    output_scale: float = 1.0

    def __post_init__(self):
        if self.n_phases < 0:
            raise InvalidConfigError(f"n_phases must be >= 0, got {self.n_phases}")
        if self.primal_channels[0] != 2 or self.primal_channels[-1] != 1:
            raise InvalidConfigError(
                f"Primal channels must start at 2 and end at 1, got {self.primal_channels}")
        if self.kernel_size % 2 != 1:
            raise InvalidConfigError(f"kernel_size must be odd, got {self.kernel_size}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d['dual_widths'] = list(self.dual_widths)
        d['primal_channels'] = list(self.primal_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'NetworkConfig':
        d = dict(d)
        d['dual_widths'] = tuple(d.get('dual_widths', (64, 16)))
        d['primal_channels'] = tuple(d.get('primal_channels', (2, 64, 128, 256, 64, 1)))
        return cls(**d)

    def config_hash(self) -> int:
        payload = json.dumps(self.as_dict(), sort_keys=True).encode()
        return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), 'little')


class _ForwardProjection(torch.autograd.Function):
    @staticmethod
    def forward(ctx, f, events, proj):
        ctx.events = events
        ctx.proj = proj
        values = f.detach().cpu().numpy().astype(np.float64)
        out = forward_project(Image2D(values, proj.grid.spacing), events, proj)
        return torch.from_numpy(out).to(f)

    @staticmethod
    def backward(ctx, grad_out):
        img = back_project(grad_out.detach().cpu().numpy().astype(np.float64), ctx.events,
                           ctx.proj.grid, ctx.proj)
        return torch.from_numpy(img.values).to(grad_out), None, None


class _BackProjection(torch.autograd.Function):
    @staticmethod
    def forward(ctx, h, events, proj):
        ctx.events = events
        ctx.proj = proj
        img = back_project(h.detach().cpu().numpy().astype(np.float64), events, proj.grid, proj)
        return torch.from_numpy(img.values).to(h)

    @staticmethod
    def backward(ctx, grad_img):
        values = grad_img.detach().cpu().numpy().astype(np.float64)
        out = forward_project(Image2D(values, ctx.proj.grid.spacing), ctx.events, ctx.proj)
        return torch.from_numpy(out).to(grad_img), None, None


def project(f: torch.Tensor, events: EventList, proj: ProjectionContext) -> torch.Tensor:
    return _ForwardProjection.apply(f, events, proj)


def backproject(h: torch.Tensor, events: EventList, proj: ProjectionContext) -> torch.Tensor:
    return _BackProjection.apply(h, events, proj)


class DualModule(nn.Module):
    """Per-event MLP 3 -> 64 -> 16 -> 1 on the columns (A f, g, h)."""

    def __init__(self, widths=(64, 16)):
        super().__init__()
        layers = []
        n_in = 3
        for width in widths:
            layers += [nn.Linear(n_in, width), nn.PReLU()]
            n_in = width
        layers.append(nn.Linear(n_in, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, h, af, g):
        if not (h.shape == af.shape == g.shape) or h.dim() != 1:
            raise DimensionError(f"Dual inputs must be equal-length vectors, got "
                                 f"{tuple(h.shape)}, {tuple(af.shape)}, {tuple(g.shape)}")
        x = torch.stack((af, g, h), dim=1)
        return self.model(x)[:, 0]


class PrimalModule(nn.Module):
    """CNN on the two-channel image (f, A^T h); batch norm and PReLU between layers."""

    def __init__(self, channels=(2, 64, 128, 256, 64, 1), kernel_size=3):
        super().__init__()
        padding = kernel_size // 2
        layers = []
        for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
            layers.append(nn.Conv2d(c_in, c_out, kernel_size=kernel_size, padding=padding))
            if i < len(channels) - 2:
                layers += [nn.BatchNorm2d(c_out), nn.PReLU()]
        self.model = nn.Sequential(*layers)

    def forward(self, f, bp):
        if f.shape != bp.shape or f.dim() != 2:
            raise DimensionError(f"Primal inputs must be equal-shape images, got "
                                 f"{tuple(f.shape)} and {tuple(bp.shape)}")
        x = torch.stack((f, bp), dim=0).unsqueeze(0)
        return self.model(x)[0, 0]


class LMPDNet(nn.Module):
    def __init__(self, config: Optional[NetworkConfig] = None):
        super().__init__()
        self.config = config or NetworkConfig()
        n_modules = 1 if self.config.shared_weights else self.config.n_phases
        n_modules = n_modules if self.config.n_phases > 0 else 0
        self.dual_models = nn.ModuleList([DualModule(self.config.dual_widths) for _ in range(n_modules)])
        self.primal_models = nn.ModuleList([
            PrimalModule(self.config.primal_channels, self.config.kernel_size) for _ in range(n_modules)
        ])

    def _phase_modules(self, k):
        i = 0 if self.config.shared_weights else k
        return self.dual_models[i], self.primal_models[i]

    def forward(self, events: EventList, proj: ProjectionContext):
        dtype = next(self.parameters()).dtype if len(self.dual_models) else torch.float64
        n = len(events)
        g = torch.ones(n, dtype=dtype)
        h = torch.zeros(n, dtype=dtype)
        f = torch.zeros(proj.grid.shape, dtype=dtype)
        phases = []
        for k in range(self.config.n_phases):
            dual, primal = self._phase_modules(k)
            h = dual(h, project(f, events, proj), g)
            f = primal(f, backproject(h, events, proj))
            phases.append(f)
        return f, phases


@dataclass
class LmpdTrace:
    """Tensors kept from a recorded forward pass."""

    output: Optional[torch.Tensor]
    phases: List[torch.Tensor] = field(default_factory=list)


@dataclass
class LmpdOutput:
    image: Image2D
    phases: List[Image2D]
    trace: Optional[LmpdTrace] = None


def _to_image(t: torch.Tensor, scale: float, spacing: float) -> Image2D:
    return Image2D(t.detach().cpu().numpy().astype(np.float64) * scale, spacing)


def lmpd_forward(net: LMPDNet, events: EventList, proj: ProjectionContext,
                 record: bool = False) -> LmpdOutput:
    """Run all phases; with ``record`` the autograd graph is kept for lmpd_backward."""
    scale = net.config.output_scale
    spacing = proj.grid.spacing
    if record:
        f, phases = net(events, proj)
        trace = LmpdTrace(output=f, phases=phases)
    else:
        with torch.no_grad():
            f, phases = net(events, proj)
        trace = None
    return LmpdOutput(
        image=_to_image(f, scale, spacing),
        phases=[_to_image(p, scale, spacing) for p in phases],
        trace=trace,
    )


def lmpd_backward(net: LMPDNet, trace: Optional[LmpdTrace], loss_grad) -> dict:
    """Reverse-mode gradients of <loss_grad, f_K> for every parameter, by name.

    The trace is consumed.
    """
    if trace is None or trace.output is None:
        raise LmpdStateError("No recorded forward pass; call lmpd_forward(..., record=True)")
    output = trace.output
    trace.output = None
    trace.phases = []

    grad_out = torch.as_tensor(np.asarray(loss_grad), dtype=output.dtype)
    if grad_out.shape != output.shape:
        raise DimensionError(f"Loss gradient of shape {tuple(grad_out.shape)} does not match "
                             f"output {tuple(output.shape)}")

    named = [(n, p) for n, p in net.named_parameters() if p.requires_grad]
    if not named:
        return {}
    names, params = zip(*named)
    if not output.requires_grad:
        return {n: np.zeros(tuple(p.shape)) for n, p in zip(names, params)}
    grads = torch.autograd.grad(output, params, grad_outputs=grad_out, allow_unused=True)
    return {
        n: (np.zeros(tuple(p.shape)) if g is None else g.detach().cpu().numpy().astype(np.float64))
        for n, p, g in zip(names, params, grads)
    }


def dual_module_forward(module: DualModule, h, af, g) -> np.ndarray:
    """Numpy convenience wrapper around one dual module."""
    dtype = next(module.parameters()).dtype
    with torch.no_grad():
        out = module(torch.as_tensor(np.asarray(h), dtype=dtype),
                     torch.as_tensor(np.asarray(af), dtype=dtype),
                     torch.as_tensor(np.asarray(g), dtype=dtype))
    return out.numpy().astype(np.float64)


def primal_module_forward(module: PrimalModule, f, bp) -> np.ndarray:
    """Numpy convenience wrapper around one primal module."""
    dtype = next(module.parameters()).dtype
    f = f.values if isinstance(f, Image2D) else f
    bp = bp.values if isinstance(bp, Image2D) else bp
    with torch.no_grad():
        out = module(torch.as_tensor(np.asarray(f), dtype=dtype),
                     torch.as_tensor(np.asarray(bp), dtype=dtype))
    return out.numpy().astype(np.float64)


def zero_parameters(net: nn.Module) -> None:
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()


def build_network(config: Optional[NetworkConfig] = None, seed: int = 0,
                  dtype=torch.float64) -> LMPDNet:
    """Seeded network with the framework's default initialisation."""
    torch.manual_seed(seed)
    net = LMPDNet(config).to(dtype)
    n_params = sum(p.numel() for p in net.parameters())
    logger.debug(f"Built LMPD network: {net.config.n_phases} phases, {n_params} parameters")
    return net
