"""
Training loop on a fixed set of procedural scenes.
"""
import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from depthformer.core.tensor import Tensor, backprop
from depthformer.exceptions import TrainingDivergedError
from depthformer.models.depthformer import DepthFormer
from depthformer.models.losses import silog_loss
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.training import TrainConfig
from depthformer.services.data.scenes import gen_scenes
from depthformer.services.training.checkpoint import Checkpoint, save_checkpoint
from depthformer.services.training.optimizer import AdamW, lr_at

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.ckpt"
LAST_GOOD_NAME = "last_good.ckpt"
LOSS_CURVE_NAME = "loss_curve.csv"

Sample = Tuple[np.ndarray, DepthMap]


def write_loss_curve(path: Union[str, Path], rows: Sequence[Tuple[int, float, float]]) -> None:
    """Write `iter,lr,loss` rows with a header line."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iter", "lr", "loss"])
        for step, lr, loss in rows:
            writer.writerow([step, repr(float(lr)), repr(float(loss))])


def read_loss_curve(path: Union[str, Path]) -> List[Tuple[int, float, float]]:
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        return [(int(row["iter"]), float(row["lr"]), float(row["loss"])) for row in reader]


class Trainer:
    """
    Runs AdamW with warm-up + cosine decay on SILog loss.

    Batches are drawn from a per-epoch permutation of the fixed scene set, so
    a run is fully determined by the config. With `workers > 1` the samples
    of a batch are differentiated on a thread pool; their gradients are
    still summed in batch order, giving the same result as a sequential run.
    """

    def __init__(self, cfg: TrainConfig, out_dir: Union[str, Path], model: Optional[DepthFormer] = None,
                 scenes: Optional[List[Sample]] = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.model = model if model is not None else DepthFormer(cfg.network_config(), cfg.seed)
        self.model.config.branch.level_sizes(cfg.height, cfg.width)
        self.scenes = scenes if scenes is not None else gen_scenes(cfg.scene_specs())
        self.loss_config = cfg.loss_config()
        self.params = list(self.model.named_parameters())
        self.optimizer = AdamW(
            self.params,
            lr=cfg.lr,
            betas=(cfg.beta1, cfg.beta2),
            eps=cfg.eps,
            weight_decay=cfg.weight_decay,
        )
        self.curve: List[Tuple[int, float, float]] = []
        self._orders: Dict[int, np.ndarray] = {}

    def batch_indices(self, step: int) -> List[int]:
        n = len(self.scenes)
        start = step * self.cfg.batch_size
        indices = []
        for k in range(start, start + self.cfg.batch_size):
            epoch = k // n
            if epoch not in self._orders:
                self._orders = {epoch: np.random.default_rng([self.cfg.seed, epoch]).permutation(n)}
            indices.append(int(self._orders[epoch][k % n]))
        return indices

    def sample_gradients(self, index: int) -> Tuple[float, List[np.ndarray]]:
        """Loss and parameter gradients for one scene."""
        image, depth = self.scenes[index]
        pred = self.model.forward(Tensor(image))
        loss = silog_loss(pred, depth, self.loss_config)
        grads = backprop(loss, [p for _, p in self.params])
        return loss.item(), grads

    def batch_gradients(self, indices: Sequence[int]) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean loss and mean gradients over a batch, reduced in batch order."""
        if self.cfg.workers > 1 and len(indices) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(self.sample_gradients, indices))
        else:
            results = [self.sample_gradients(i) for i in indices]

        scale = 1.0 / len(indices)
        loss = math.fsum(r[0] for r in results) * scale
        grads = {}
        for k, (name, _) in enumerate(self.params):
            total = results[0][1][k].copy()
            for r in results[1:]:
                total += r[1][k]
            grads[name] = total * scale
        return loss, grads

    def checkpoint(self, iteration: int) -> Checkpoint:
        return Checkpoint.from_model(self.model, iteration, self.cfg)

    def run(self) -> Checkpoint:
        """
        Train for cfg.iterations steps.

        Writes the final checkpoint and the loss curve to the output directory.

        Returns:
            Checkpoint: The final parameters

        Raises:
            TrainingDivergedError: On a non-finite loss; the parameters from
                before that step are saved as the last-good checkpoint
        """
        cfg = self.cfg
        os.makedirs(self.out_dir, exist_ok=True)
        total, warmup = cfg.iterations, cfg.warmup_iterations
        logger.info(
            f"Training {self.model.variant.value} ({self.model.num_parameters()} parameters) "
            f"for {total} iterations on {len(self.scenes)} scenes, batch {cfg.batch_size}"
        )

        for step in range(total):
            lr = lr_at(step, cfg.lr, total, warmup)
            loss, grads = self.batch_gradients(self.batch_indices(step))
            if not math.isfinite(loss):
                path = save_checkpoint(self.out_dir / LAST_GOOD_NAME, self.checkpoint(step))
                write_loss_curve(self.out_dir / LOSS_CURVE_NAME, self.curve)
                logger.error(f"Loss became {loss} at iteration {step}; last good parameters saved to {path}")
                raise TrainingDivergedError(f"non-finite loss {loss} at iteration {step}", step, path)
            self.curve.append((step, lr, loss))
            self.optimizer.step(grads, lr=lr)
            if step % cfg.log_every == 0 or step == total - 1:
                logger.info(f"iter {step:5d}  lr {lr:.3e}  loss {loss:.6f}")

        checkpoint = self.checkpoint(total)
        save_checkpoint(self.out_dir / CHECKPOINT_NAME, checkpoint)
        write_loss_curve(self.out_dir / LOSS_CURVE_NAME, self.curve)
        return checkpoint


def train(cfg: TrainConfig, out_dir: Union[str, Path], model: Optional[DepthFormer] = None) -> Checkpoint:
    """
    Train a network and write its checkpoint and loss curve.

    Args:
        cfg: Optimizer, data and network settings
        out_dir: Directory receiving checkpoint.ckpt and loss_curve.csv
        model: Start from this network instead of a fresh one

    Returns:
        Checkpoint: Final parameters with the config echo
    """
    return Trainer(cfg, out_dir, model).run()
