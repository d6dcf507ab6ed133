#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Configuration Module for the Masked RBM toolkit
This module holds the typed configuration objects and the dotenv-file loader.

Configuration files use the dotenv format (``EPOCHS=200``). They are read
with python-dotenv without touching the process environment.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import dotenv_values

from src.utils.errors import ConfigError

# Configure logging
logger = logging.getLogger(__name__)

MASK_ESTIMATORS = ("mean", "final")


def _coerce(value, default, annotation=None):
    """Convert a raw string to the type of a field (its default, else its annotation)."""
    if not isinstance(value, str):
        return value
    if value.strip().lower() in ("", "none", "null"):
        return None
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, float):
        return float(value)
    if default is None:
        kinds = getattr(annotation, "__args__", (annotation,))
        if str in kinds:
            return value
        return float(value) if float in kinds else int(value)
    if isinstance(default, int):
        return int(value)
    return value


class ConfigMixin:
    """Shared helpers for the configuration dataclasses."""

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        """Build a config from a mapping of (upper- or lower-case) field names.

        Args:
            mapping (dict): Raw values, typically from a dotenv file.
            **overrides: Values that take precedence over the mapping.

        Returns:
            The validated configuration.
        """
        defaults = cls()
        values = {}
        for field in dataclasses.fields(cls):
            for key in (field.name, field.name.upper()):
                if mapping and key in mapping:
                    try:
                        values[field.name] = _coerce(mapping[key], getattr(defaults, field.name), field.type)
                    except ValueError as e:
                        raise ConfigError(f"Invalid value for {key}: {mapping[key]!r}") from e
        values.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        return self


@dataclass
class TrainConfig(ConfigMixin):
    """Hyperparameters for pretraining and joint foreground training."""

    epochs: int = 1000
    minibatch_size: int = 100
    n_hidden: int = 100
    lr_appearance: float = 1e-3
    lr_shape: float = 1e-2
    lr_bias: float = 1e-2
    weight_decay: float = 1e-4
    n_persistent_chains: int = 100
    outlier_p: float = 0.3
    # None or negative: never; 0: from the start; E0 > 0: fine-tuning from E0
    outlier_from_epoch: Optional[int] = None
    checkpoint_every: int = 50
    holdout_fraction: float = 0.1
    seed: Optional[int] = None
    workers: int = 1

    def validate(self):
        for name in ("epochs", "weight_decay", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("minibatch_size", "n_hidden", "n_persistent_chains", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lr_appearance", "lr_shape", "lr_bias"):
            rate = getattr(self, name)
            # lr = 0 is accepted so a run can return its initialization
            if not (rate >= 0.0 and rate < float("inf")):
                raise ConfigError(f"{name} must be finite and non-negative, got {rate}")
        if not 0.0 <= self.outlier_p <= 1.0:
            raise ConfigError(f"outlier_p must lie in [0, 1], got {self.outlier_p}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction must lie in [0, 1), got {self.holdout_fraction}")
        return self

    def outliers_enabled(self, epoch):
        """Whether the outlier component is active during the given epoch."""
        if self.outlier_from_epoch is None or self.outlier_from_epoch < 0:
            return False
        return epoch >= self.outlier_from_epoch


@dataclass
class GibbsConfig(ConfigMixin):
    """Settings for Gibbs inference at test time."""

    n_sweeps: int = 100
    burn_in: int = 50
    mask_estimator: str = "mean"
    seed: Optional[int] = None

    def validate(self):
        if self.burn_in < 0 or self.n_sweeps < 1:
            raise ConfigError(f"Invalid sweep counts: n_sweeps={self.n_sweeps}, burn_in={self.burn_in}")
        if self.burn_in >= self.n_sweeps:
            raise ConfigError(f"burn_in ({self.burn_in}) must be smaller than n_sweeps ({self.n_sweeps})")
        if self.mask_estimator not in MASK_ESTIMATORS:
            raise ConfigError(f"mask_estimator must be one of {MASK_ESTIMATORS}, got {self.mask_estimator!r}")
        return self


@dataclass
class ProbeConfig(ConfigMixin):
    """Settings for the L2-regularized logistic probe."""

    l2_lambda: float = 1e-2
    iterations: int = 10000
    per_class: int = 10
    seed: Optional[int] = None

    def validate(self):
        if not self.l2_lambda >= 0.0:
            raise ConfigError(f"l2_lambda must be non-negative, got {self.l2_lambda}")
        if self.iterations < 1 or self.per_class < 1:
            raise ConfigError("iterations and per_class must be positive")
        return self


def load_config_file(path):
    """Read a dotenv-format configuration file.

    Args:
        path (str): Path to the file, or None.

    Returns:
        dict: Raw key/value pairs (empty if path is None).
    """
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"Configuration file not found: {path}")
    logger.info(f"Loading configuration from {path}")
    values = dotenv_values(path)
    if not values:
        logger.warning(f"Configuration file {path} is empty")
    return dict(values)
