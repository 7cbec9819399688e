"""
Toy-scale training of the unrolled network.

Adam on the MSE between the last phase and the truth image, batch size 1. The
state with the lowest validation loss is kept and returned.
"""

import copy
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch

from .events import EventList
from .exceptions import DimensionError, EmptyDataError, TrainingDivergedError
from .images import Image2D
from .io_utils import read_checkpoint, write_checkpoint
from .lpd import LMPDNet, NetworkConfig, build_network
from .projector import ProjectionContext

logger = logging.getLogger(__name__)


@dataclass
class TrainingPair:
    events: EventList
    truth: Image2D
    name: str = ''


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0


@dataclass
class TrainResult:
    net: LMPDNet
    best_state: 'OrderedDict[str, torch.Tensor]'
    best_epoch: int
    best_val_loss: float
    train_losses: List[float] = field(default_factory=list)
    val_losses: List[float] = field(default_factory=list)


def _truth_tensor(pair: TrainingPair, net: LMPDNet, dtype) -> torch.Tensor:
    return torch.as_tensor(pair.truth.values / net.config.output_scale, dtype=dtype)


def evaluate_loss(net: LMPDNet, pairs: Sequence[TrainingPair], proj: ProjectionContext) -> float:
    """Mean MSE over the pairs with batch norm in eval mode."""
    if not pairs:
        return float('nan')
    was_training = net.training
    net.eval()
    dtype = next(net.parameters()).dtype
    total = 0.0
    with torch.no_grad():
        for pair in pairs:
            out, _ = net(pair.events, proj)
            total += float(torch.mean((out - _truth_tensor(pair, net, dtype)) ** 2))
    net.train(was_training)
    return total / len(pairs)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    # one generator per epoch so a resumed run visits pairs in the same order
    return np.random.Generator(np.random.PCG64([seed, epoch])).permutation(n)


def train_toy(train: Sequence[TrainingPair], val: Sequence[TrainingPair], proj: ProjectionContext,
              net_config: Optional[NetworkConfig] = None, cfg: Optional[TrainConfig] = None,
              net: Optional[LMPDNet] = None, resume_state: Optional[dict] = None,
              epoch_callback: Optional[Callable] = None) -> TrainResult:
    """Train on ``train``, select the state with minimum loss on ``val``.

    ``resume_state`` is a dict produced by ``training_state`` and continues the
    run from the epoch after the one it was saved at.
    """
    cfg = cfg or TrainConfig()
    if not train:
        raise EmptyDataError("Training set is empty")
    val = list(val) if val else list(train)
    for pair in list(train) + val:
        pair.truth.check_grid(proj.grid)

    if net is None:
        net = build_network(net_config, seed=cfg.seed)
    dtype = next(net.parameters()).dtype
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate, betas=tuple(cfg.betas),
                                 eps=cfg.eps)

    start_epoch = 0
    train_losses: List[float] = []
    val_losses: List[float] = []
    if resume_state is not None:
        net.load_state_dict(resume_state['model'])
        optimizer.load_state_dict(resume_state['optimizer'])
        start_epoch = resume_state['epoch'] + 1
        train_losses = list(resume_state['train_losses'])
        val_losses = list(resume_state['val_losses'])
        best_state = resume_state['best_state']
        best_val = resume_state['best_val_loss']
        best_epoch = resume_state['best_epoch']
        logger.info(f"Resuming training at epoch {start_epoch}")
    else:
        best_state = copy.deepcopy(net.state_dict())
        best_val = evaluate_loss(net, val, proj)
        best_epoch = 0
        val_losses.append(best_val)
        train_losses.append(float('nan'))
        logger.info(f"Initial validation MSE {best_val:.6e}")

    for epoch in range(max(start_epoch, 1), cfg.epochs + 1):
        net.train()
        epoch_loss = 0.0
        for i in _epoch_order(cfg.seed, epoch, len(train)):
            pair = train[i]
            optimizer.zero_grad()
            out, _ = net(pair.events, proj)
            loss = torch.mean((out - _truth_tensor(pair, net, dtype)) ** 2)
            if not torch.isfinite(loss):
                logger.error(f"Non-finite training loss at epoch {epoch} on pair {pair.name or i}")
                raise TrainingDivergedError(f"Training loss became {float(loss)} at epoch {epoch}",
                                            checkpoint=best_state, epoch=epoch)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss)

        train_losses.append(epoch_loss / len(train))
        v = evaluate_loss(net, val, proj)
        val_losses.append(v)
        if v < best_val:
            best_val, best_epoch = v, epoch
            best_state = copy.deepcopy(net.state_dict())
        logger.debug(f"Epoch {epoch}: train {train_losses[-1]:.6e}, val {v:.6e}")
        if epoch_callback is not None:
            epoch_callback(epoch, net, optimizer, TrainResult(net, best_state, best_epoch, best_val,
                                                               train_losses, val_losses))

    net.load_state_dict(best_state)
    net.eval()
    logger.info(f"Best validation MSE {best_val:.6e} at epoch {best_epoch}")
    return TrainResult(net=net, best_state=best_state, best_epoch=best_epoch, best_val_loss=best_val,
                       train_losses=train_losses, val_losses=val_losses)


def training_state(epoch: int, net: LMPDNet, optimizer, result: TrainResult) -> dict:
    return {
        'epoch': epoch,
        'model': copy.deepcopy(net.state_dict()),
        'optimizer': copy.deepcopy(optimizer.state_dict()),
        'best_state': result.best_state,
        'best_val_loss': result.best_val_loss,
        'best_epoch': result.best_epoch,
        'train_losses': list(result.train_losses),
        'val_losses': list(result.val_losses),
        'network_config': result.net.config.as_dict(),
    }


def save_training_state(path, state: dict) -> None:
    torch.save(state, path)


def load_training_state(path) -> dict:
    return torch.load(path, weights_only=False)


def save_network(path, net: LMPDNet) -> None:
    state = OrderedDict((k, v.detach().cpu().numpy()) for k, v in net.state_dict().items())
    write_checkpoint(path, state, net.config.config_hash())


def load_network(path, config: NetworkConfig, dtype=torch.float64) -> LMPDNet:
    """Rebuild a network from its config and fill it from a binary checkpoint."""
    _, blocks = read_checkpoint(Path(path), expected_hash=config.config_hash())
    net = LMPDNet(config).to(dtype)
    template = net.state_dict()
    if len(blocks) != len(template):
        raise DimensionError(f"Checkpoint has {len(blocks)} blocks, network expects {len(template)}")
    state = OrderedDict()
    for (name, tensor), block in zip(template.items(), blocks):
        if block.shape[0] != tensor.numel():
            raise DimensionError(f"Block {name} has {block.shape[0]} values, expected {tensor.numel()}")
        state[name] = torch.as_tensor(block.reshape(tuple(tensor.shape)), dtype=tensor.dtype)
    net.load_state_dict(state)
    net.eval()
    return net
