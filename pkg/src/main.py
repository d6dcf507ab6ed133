#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Masked RBM Toolkit - Main Application
This is the command-line entry point. It parses the subcommand, builds the
configuration objects and runs one pipeline stage: data generation,
pretraining, joint training, segmentation, sampling or evaluation.

Exit status: 0 on success, 1 for usage/configuration/input errors,
2 for numerical failures and other runtime errors.
"""

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

# Add the repository root to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.data.container import file_digest, read_model, write_model
from src.data.dataset import crop_patches, load_dataset, prepare_images, write_dataset
from src.data.images import overlay, quantize, write_probability_map, write_tiled
from src.data.toy import ToyConfig, gen_match_pairs, gen_toy
from src.eval.experiments import extract_fgbg_features, extract_rbm_features, run_match_experiment, run_probe_experiment
from src.eval.metrics import format_report, proportion_report, random_mask_control, seg_accuracy, write_reports_csv, write_reports_text
from src.model.inference import sample_foreground, segment_batch
from src.model.masked import OutlierConfig
from src.rbm.params import BetaRbmParams, MixedRbmParams, init_mixed_params
from src.training.trainer import BetaRbmTrainer, ForegroundTrainer
from src.utils.config import MASK_ESTIMATORS, GibbsConfig, ProbeConfig, TrainConfig, load_config_file
from src.utils.errors import ConfigError, DimensionError, DivergenceError, DomainError, FormatError, NumericalError
from src.utils.rng import PURPOSE_INIT, PURPOSE_MODEL, make_rng

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
SAMPLE_STREAM = 100
# Arguments that never enter the provenance echo, so outputs do not depend on them
NOT_ECHOED = ("out", "config", "log_file", "verbose", "dry_run", "workers")

logger = logging.getLogger(__name__)


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def configure_logging(verbose=False, log_file=None):
    """Configure the root logger once for the whole process."""
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, handlers=handlers, force=True)


def _write_json(path, payload):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _stem(path):
    return os.path.splitext(path)[0]


def _model_hash(digests):
    """One hash over the sha256 digests of the model files behind a result."""
    return hashlib.sha256("".join(digests).encode("ascii")).hexdigest()


class MaskedRbmPipeline:
    """Runs one subcommand of the toolkit."""

    def __init__(self, args):
        """Initialize the pipeline from parsed arguments.

        Args:
            args (argparse.Namespace): Parsed command line.
        """
        self.args = args
        self.file_values = load_config_file(args.config)
        self.configs = {}

    def run(self):
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        logger.info(f"Running {self.args.command}...")
        handler()
        logger.info(f"{self.args.command} finished.")

    # Configuration ---------------------------------------------------------

    def _workers(self):
        if getattr(self.args, "workers", None) is not None:
            return self.args.workers
        return int(self.file_values.get("WORKERS") or 1)

    def train_config(self):
        a = self.args
        cfg = TrainConfig.from_mapping(
            self.file_values,
            epochs=a.epochs,
            minibatch_size=a.batch,
            n_hidden=a.hidden,
            lr_appearance=a.lr_appearance,
            lr_shape=a.lr_shape,
            lr_bias=a.lr_bias,
            weight_decay=a.weight_decay,
            n_persistent_chains=a.chains,
            outlier_p=a.outlier_p,
            outlier_from_epoch=a.outlier_from_epoch,
            checkpoint_every=a.checkpoint_every,
            holdout_fraction=a.holdout,
            seed=a.seed,
            workers=self._workers(),
        )
        self.configs["train"] = {k: v for k, v in cfg.to_dict().items() if k != "workers"}
        return cfg

    def gibbs_config(self):
        a = self.args
        cfg = GibbsConfig.from_mapping(self.file_values, n_sweeps=a.sweeps, burn_in=a.burn_in, mask_estimator=a.mask_estimator, seed=a.seed)
        self.configs["gibbs"] = cfg.to_dict()
        return cfg

    def outlier_config(self):
        p = self.args.outlier_p
        if p is None:
            p = float(self.file_values.get("OUTLIER_P") or 0.3)
        out = OutlierConfig(p=p, enabled=p > 0.0)
        self.configs["outliers"] = {"p": out.p, "enabled": out.enabled}
        return out

    def probe_config(self):
        a = self.args
        cfg = ProbeConfig.from_mapping(self.file_values, l2_lambda=a.l2, iterations=a.iterations, per_class=a.per_class, seed=a.seed)
        self.configs["probe"] = cfg.to_dict()
        return cfg

    def echo(self):
        """The provenance record written next to every artifact."""
        arguments = {k: v for k, v in sorted(vars(self.args).items()) if k not in NOT_ECHOED}
        return {"command": self.args.command, "arguments": arguments, "config": self.configs}

    def config_hash(self):
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode("utf-8")).hexdigest()

    def write_echo(self, artifact):
        """Write config.json into an artifact directory or <stem>.config.json next to a file."""
        path = os.path.join(artifact, "config.json") if os.path.isdir(artifact) else _stem(artifact) + ".config.json"
        _write_json(path, self.echo())

    def dry_run(self):
        """Report the validated configuration; True if computation must be skipped."""
        if not self.args.dry_run:
            return False
        print(json.dumps(self.echo(), indent=2, sort_keys=True))
        logger.info("Dry run: configuration is valid, nothing computed.")
        return True

    # Inputs ----------------------------------------------------------------

    def read_params(self, path, kind):
        params, header = read_model(path)
        if not isinstance(params, kind):
            raise FormatError(f"{path}: expected a {kind.__name__} model, got {header['kind']}")
        return params, header

    @staticmethod
    def check_pixels_match(data, *models):
        for what, params in models:
            if data.n_pix != params.n_vis:
                shape = "x".join(str(s) for s in data.patch_shape)
                raise DimensionError(f"{what} vs dataset of {shape} images", (params.n_vis,), (data.n_pix,))

    @staticmethod
    def load_with_masks(directory):
        data = load_dataset(directory)
        if data.masks is None:
            raise FormatError(f"{directory}: dataset has no masks")
        return data

    # Data commands ---------------------------------------------------------

    def cmd_toy_gen(self):
        a = self.args
        cfg = ToyConfig.from_mapping(
            self.file_values,
            patch_size=a.size,
            n_train=a.n_train,
            n_test=a.n_test,
            background_dir=a.backgrounds,
            seed=a.seed,
            rectangle_fraction=a.rect_fraction,
        )
        self.configs["toy"] = cfg.to_dict()
        if self.dry_run():
            return
        if a.pairs:
            gen_match_pairs(cfg, a.pairs, a.out)
        else:
            gen_toy(cfg, a.out)
        self.write_echo(a.out)

    def cmd_crop_patches(self):
        a = self.args
        if a.size < 1 or a.n < 0:
            raise ConfigError(f"Invalid patch request: size={a.size}, n={a.n}")
        if self.dry_run():
            return
        crop_patches(a.images, a.size, a.n, a.seed, out_dir=a.out)
        self.write_echo(a.out)

    def cmd_prepare_images(self):
        a = self.args
        if a.crop < 1 or a.size < 1:
            raise ConfigError(f"Invalid crop/size: {a.crop}/{a.size}")
        if self.dry_run():
            return
        prepare_images(a.images, a.out, a.crop, a.size)
        self.write_echo(a.out)

    # Training commands -----------------------------------------------------

    def _train_beta(self, name):
        a = self.args
        cfg = self.train_config()
        data = load_dataset(a.data)
        if self.dry_run():
            return
        trainer = BetaRbmTrainer(cfg, name, a.checkpoint_dir)
        try:
            params = trainer.train(data.flat_images())
        except DivergenceError as e:
            self._save_last_good(e, name, data)
            raise
        finally:
            _write_json(_stem(a.out) + ".log.json", trainer.log)
        write_model(a.out, params, {"model": name, "patch_shape": list(data.patch_shape), "config": self.configs["train"]})
        self.write_echo(a.out)

    def _save_last_good(self, error, name, data):
        if error.last_good is not None:
            path = _stem(self.args.out) + ".last-good.mrbm"
            write_model(path, error.last_good, {"model": name, "patch_shape": list(data.patch_shape), "diverged": error.block})
            logger.error(f"Training diverged; last good parameters saved to {path}")

    def cmd_train_bg(self):
        self._train_beta("background")

    def cmd_pretrain_fg(self):
        self._train_beta("appearance")

    def cmd_train_fg(self):
        a = self.args
        cfg = self.train_config()
        data = load_dataset(a.data)
        bg, _ = self.read_params(a.bg, BetaRbmParams)
        self.check_pixels_match(data, ("background model", bg))
        init = None
        if a.init:
            appearance, _ = self.read_params(a.init, BetaRbmParams)
            self.check_pixels_match(data, ("appearance model", appearance))
            if appearance.n_hid != cfg.n_hidden:
                logger.warning(f"Using the {appearance.n_hid} hidden units of {a.init} instead of {cfg.n_hidden}")
            init = init_mixed_params(data.n_pix, appearance.n_hid, make_rng(cfg.seed, PURPOSE_INIT), appearance=appearance)
        if self.dry_run():
            return
        trainer = ForegroundTrainer(bg, cfg, a.checkpoint_dir)
        try:
            params, _ = trainer.train(data.flat_images(), init=init, gt_masks=data.flat_masks())
        except DivergenceError as e:
            self._save_last_good(e, "foreground", data)
            raise
        finally:
            _write_json(_stem(a.out) + ".log.json", trainer.log)
        metadata = {"model": "foreground", "patch_shape": list(data.patch_shape), "config": self.configs["train"]}
        metadata["background_sha256"] = file_digest(a.bg)
        write_model(a.out, params, metadata)
        self.write_echo(a.out)

    # Inference commands ----------------------------------------------------

    def cmd_segment(self):
        a = self.args
        cfg = self.gibbs_config()
        out = self.outlier_config()
        fg, _ = self.read_params(a.fg, MixedRbmParams)
        bg, _ = self.read_params(a.bg, BetaRbmParams)
        data = load_dataset(a.data)
        self.check_pixels_match(data, ("foreground model", fg), ("background model", bg))
        if self.dry_run():
            return
        result = segment_batch(data.flat_images(), fg, bg, out, cfg, workers=self._workers())
        shape = (len(data),) + data.patch_shape
        metadata = {"source": "segment", "patch_size": list(data.patch_shape), "fg_sha256": file_digest(a.fg), "bg_sha256": file_digest(a.bg)}
        write_dataset(a.out, quantize(data.images), masks=result.hard_mask.reshape(shape), labels=data.labels, metadata=metadata)
        for index, probabilities in enumerate(result.mask_probabilities.reshape(shape)):
            write_probability_map(os.path.join(a.out, "probabilities", f"{index:05d}.pgm"), probabilities)
        np.savetxt(os.path.join(a.out, "features.csv"), result.hf_means, delimiter=",", fmt="%.10g")
        if a.overlay:
            write_tiled(os.path.join(a.out, "overlay.pgm"), overlay(data.images, result.hard_mask.reshape(shape)))
        self.write_echo(a.out)

    def cmd_sample(self):
        a = self.args
        if a.steps < 1 or a.n < 1:
            raise ConfigError(f"--steps and --n must be positive, got {a.steps} and {a.n}")
        fg, header = self.read_params(a.fg, MixedRbmParams)
        patch_shape = tuple(header.get("metadata", {}).get("patch_shape") or ())
        if int(np.prod(patch_shape or (0,))) != fg.n_vis:
            side = int(round(np.sqrt(fg.n_vis)))
            if side * side != fg.n_vis:
                raise FormatError(f"{a.fg}: no patch_shape in metadata and {fg.n_vis} pixels are not a square")
            patch_shape = (side, side)
        self.configs["sample"] = {"steps": a.steps, "n": a.n}
        if self.dry_run():
            return
        fantasy = sample_foreground(fg, a.steps, make_rng(a.seed, PURPOSE_MODEL, SAMPLE_STREAM), n_samples=a.n)
        grid_shape = (a.n,) + patch_shape
        os.makedirs(a.out, exist_ok=True)
        write_tiled(os.path.join(a.out, "composite.pgm"), fantasy.composite.reshape(grid_shape), columns=a.columns)
        write_tiled(os.path.join(a.out, "appearance.pgm"), fantasy.appearance_means.reshape(grid_shape), columns=a.columns)
        write_tiled(os.path.join(a.out, "masks.pgm"), fantasy.mask_means.reshape(grid_shape), columns=a.columns)
        self.write_echo(a.out)

    # Evaluation commands ---------------------------------------------------

    def _publish(self, reports):
        for report in reports:
            print(format_report(report))
        if self.args.out:
            os.makedirs(self.args.out, exist_ok=True)
            write_reports_csv(os.path.join(self.args.out, "report.csv"), reports)
            write_reports_text(os.path.join(self.args.out, "report.txt"), reports)
            self.write_echo(self.args.out)

    def _predicted_and_truth(self):
        pred = self.load_with_masks(self.args.pred)
        truth = self.load_with_masks(self.args.data)
        if pred.masks.shape != truth.masks.shape:
            raise DimensionError("predicted masks", truth.masks.shape, pred.masks.shape)
        return pred, truth

    def _prediction_provenance(self, pred):
        """Config hash plus the hash of the models recorded by segment."""
        provenance = {"config_hash": self.config_hash()}
        digests = [pred.metadata.get("fg_sha256"), pred.metadata.get("bg_sha256")]
        if all(digests):
            provenance["model_hash"] = _model_hash(digests)
        else:
            logger.warning(f"{self.args.pred}: no model digests in the metadata; model_hash left empty")
        return provenance

    def cmd_eval_seg(self):
        if self.dry_run():
            return
        pred, truth = self._predicted_and_truth()
        accuracy = seg_accuracy(pred.masks, truth.masks)
        self._publish([proportion_report("seg_accuracy", accuracy, truth.masks.size, self._prediction_provenance(pred))])

    def cmd_eval_control(self):
        if self.dry_run():
            return
        pred, truth = self._predicted_and_truth()
        if len(pred) < 2:
            raise DomainError(f"The random-mask control needs at least 2 images, got {len(pred)}")
        provenance = self._prediction_provenance(pred)
        reports = [
            proportion_report("seg_accuracy", seg_accuracy(pred.masks, truth.masks), truth.masks.size, provenance),
            random_mask_control(pred.masks, truth.masks, self.args.seed, provenance),
        ]
        self._publish(reports)

    def _models_for_features(self, *datasets):
        a = self.args
        fg, _ = self.read_params(a.fg, MixedRbmParams)
        bg, _ = self.read_params(a.bg, BetaRbmParams)
        rbm = None
        models = [("foreground model", fg), ("background model", bg)]
        if a.rbm:
            rbm, _ = self.read_params(a.rbm, BetaRbmParams)
            models.append(("baseline model", rbm))
        for data in datasets:
            self.check_pixels_match(data, *models)
        model_hash = _model_hash(file_digest(p) for p in (a.fg, a.bg, a.rbm) if p)
        return fg, bg, rbm, model_hash

    def cmd_eval_probe(self):
        a = self.args
        gibbs = self.gibbs_config()
        out = self.outlier_config()
        probe = self.probe_config()
        data = load_dataset(a.data)
        if data.labels is None:
            raise FormatError(f"{a.data}: dataset has no labels")
        fg, bg, rbm, model_hash = self._models_for_features(data)
        if self.dry_run():
            return
        images = data.flat_images()
        features = {"fgbg": extract_fgbg_features(images, fg, bg, out, gibbs, workers=self._workers())}
        if rbm is not None:
            features["rbm"] = extract_rbm_features(images, rbm)
        provenance = {"config_hash": self.config_hash(), "model_hash": model_hash}
        self._publish(run_probe_experiment(features, data.labels, probe, provenance))

    def cmd_eval_match(self):
        a = self.args
        gibbs = self.gibbs_config()
        out = self.outlier_config()
        set_a = load_dataset(os.path.join(a.pairs, "a"))
        set_b = load_dataset(os.path.join(a.pairs, "b"))
        if len(set_a) != len(set_b):
            raise DimensionError("paired sets", (len(set_a),), (len(set_b),))
        fg, bg, rbm, model_hash = self._models_for_features(set_a, set_b)
        if self.dry_run():
            return
        workers = self._workers()
        pairs = {
            "fgbg": (
                extract_fgbg_features(set_a.flat_images(), fg, bg, out, gibbs, workers=workers),
                extract_fgbg_features(set_b.flat_images(), fg, bg, out, gibbs, workers=workers),
            )
        }
        if rbm is not None:
            pairs["rbm"] = (extract_rbm_features(set_a.flat_images(), rbm), extract_rbm_features(set_b.flat_images(), rbm))
        self._publish(run_match_experiment(pairs, {"config_hash": self.config_hash(), "model_hash": model_hash}))

    def cmd_inspect(self):
        params, header = read_model(self.args.model)
        if self.dry_run():
            return
        print(json.dumps(header, indent=2, sort_keys=True))
        print(f"{'tensor':<24} {'shape':<14} {'min':>12} {'max':>12} {'mean':>12} {'std':>12}")
        for name, value in params.blocks().items():
            print(
                f"{name:<24} {str(value.shape):<14} {value.min():12.5g} {value.max():12.5g} "
                f"{value.mean():12.5g} {value.std():12.5g}"
            )


def build_parser():
    """Create the argument parser with one subparser per command."""
    common = UsageParser(add_help=False)
    common.add_argument("--config", help="dotenv-format file with configuration overrides")
    common.add_argument("--log-file", help="also write the log to this file")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("--dry-run", action="store_true", help="validate the configuration without computing")

    seeded = UsageParser(add_help=False)
    seeded.add_argument("--seed", type=int, required=True, help="global random seed")

    workers = UsageParser(add_help=False)
    workers.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")

    training = UsageParser(add_help=False)
    training.add_argument("--data", required=True, help="training dataset directory")
    training.add_argument("--out", required=True, help="output model file (.mrbm)")
    training.add_argument("--epochs", type=int)
    training.add_argument("--lr-appearance", type=float)
    training.add_argument("--lr-shape", type=float)
    training.add_argument("--lr-bias", type=float)
    training.add_argument("--weight-decay", type=float)
    training.add_argument("--batch", type=int, help="minibatch size")
    training.add_argument("--hidden", type=int, help="number of hidden units")
    training.add_argument("--chains", type=int, help="number of persistent chains")
    training.add_argument("--outlier-p", type=float, help="outlier prior (default 0.3)")
    training.add_argument("--outlier-from-epoch", type=int, help="enable outliers from this epoch; negative never")
    training.add_argument("--checkpoint-every", type=int)
    training.add_argument("--checkpoint-dir", help="directory for checkpoints and the epoch log")
    training.add_argument("--holdout", type=float, help="held-out fraction for pretraining diagnostics")

    gibbs = UsageParser(add_help=False)
    gibbs.add_argument("--fg", required=True, help="foreground model (.mrbm)")
    gibbs.add_argument("--bg", required=True, help="background model (.mrbm)")
    gibbs.add_argument("--sweeps", type=int, help="Gibbs sweeps per image")
    gibbs.add_argument("--burn-in", type=int, help="sweeps discarded before averaging")
    gibbs.add_argument("--mask-estimator", choices=MASK_ESTIMATORS)
    gibbs.add_argument("--outlier-p", type=float, help="outlier prior (default 0.3, 0 disables)")

    parser = UsageParser(prog="masked-rbm", description="Masked RBM foreground/background toolkit")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)

    p = commands.add_parser("toy-gen", parents=[common, seeded], help="generate the toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, help="patch side length (default 16)")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--backgrounds", help="directory of natural images for backgrounds")
    p.add_argument("--rect-fraction", type=float)
    p.add_argument("--pairs", type=int, help="write N objects on two background sets instead")

    p = commands.add_parser("crop-patches", parents=[common, seeded], help="crop background patches")
    p.add_argument("--images", required=True)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--out", required=True)

    p = commands.add_parser("prepare-images", parents=[common], help="centre-crop and downscale photos")
    p.add_argument("--images", required=True)
    p.add_argument("--crop", type=int, default=210)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--out", required=True)

    commands.add_parser("train-bg", parents=[common, seeded, workers, training], help="train the background Beta RBM")
    commands.add_parser("pretrain-fg", parents=[common, seeded, workers, training], help="train a Beta RBM on full images")

    p = commands.add_parser("train-fg", parents=[common, seeded, workers, training], help="train the foreground model")
    p.add_argument("--bg", required=True, help="pretrained background model")
    p.add_argument("--init", help="pretrained appearance model (from pretrain-fg)")

    p = commands.add_parser("segment", parents=[common, seeded, workers, gibbs], help="segment a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", action="store_true", help="also write a tiled overlay image")

    p = commands.add_parser("sample", parents=[common, seeded], help="draw fantasy samples from the foreground model")
    p.add_argument("--fg", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--columns", type=int, default=10)
    p.add_argument("--out", required=True)

    for name, seed_parents in (("eval-seg", []), ("eval-control", [seeded])):
        p = commands.add_parser(name, parents=[common] + seed_parents, help="segmentation accuracy" if name == "eval-seg" else "random-mask control")
        p.add_argument("--pred", required=True, help="output directory of segment")
        p.add_argument("--data", required=True, help="dataset with ground-truth masks")
        p.add_argument("--out", help="report directory")

    p = commands.add_parser("eval-probe", parents=[common, seeded, workers, gibbs], help="logistic probe on hidden features")
    p.add_argument("--data", required=True, help="labelled dataset")
    p.add_argument("--rbm", help="plain Beta RBM baseline")
    p.add_argument("--l2", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--out", help="report directory")

    p = commands.add_parser("eval-match", parents=[common, seeded, workers, gibbs], help="match codes across backgrounds")
    p.add_argument("--pairs", required=True, help="toy-gen --pairs output directory")
    p.add_argument("--rbm", help="plain Beta RBM baseline")
    p.add_argument("--out", help="report directory")

    p = commands.add_parser("inspect", parents=[common], help="print a model container")
    p.add_argument("model")
    return parser


def main(argv=None):
    """Parse the command line, run the command and return the exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)
    try:
        MaskedRbmPipeline(args).run()
    except (ConfigError, DimensionError, DomainError, FormatError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return 1
    except NumericalError as e:
        logger.error(f"{args.command}: numerical failure: {e}")
        return 2
    except Exception as e:
        logger.error(f"Error in {args.command}: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
