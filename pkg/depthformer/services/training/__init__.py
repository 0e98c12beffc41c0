"""
Training package.
"""
from depthformer.services.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from depthformer.services.training.optimizer import AdamW, lr_at
from depthformer.services.training.trainer import Trainer, train
