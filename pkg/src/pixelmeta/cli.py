"""Command line entry point: synth | pseudo-gen | train | segment | eval.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error. Every run
writes a config-echo JSON alongside its outputs so experiments are
self-describing. Flag defaults can be overridden via PIXELMETA_<FLAG>
environment variables (PIXELMETA_SEED, PIXELMETA_THREADS, PIXELMETA_VERBOSE).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path


from . import evaluate, metalearn, synth
from .data import BACKGROUND, IGNORE_LABEL, load_manifest, sample_episode
from .encoder import load_checkpoint
from .errors import PixelMetaError
from .inference import build_support_index, segment_query
from .pseudolabel import PseudoLabelConfig, generate_pseudo_mask
from .tensorio import save_tensor


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _env_int(name: str, fallback):
    raw = os.environ.get(f"PIXELMETA_{name}")
    return int(raw) if raw is not None else fallback


def _resolve_seed(seed) -> int:
    """Missing seeds are drawn once and recorded, never silently implicit."""
    if seed is not None:
        return seed
    drawn = int.from_bytes(os.urandom(4), "little")
    print(f"seed not given; using recorded random seed {drawn}", file=sys.stderr)
    return drawn


def _write_config_echo(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_echo.json", "w") as f:
        json.dump({"command": command, "config": config}, f, indent=2, sort_keys=True)


def _pseudo_config(args) -> PseudoLabelConfig:
    return PseudoLabelConfig(
        saliency_threshold=args.theta_s,
        mask_threshold=args.tau,
        use_saliency=not args.no_saliency,
        weight_epsilon=args.epsilon,
    )


def _add_pseudo_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.5,
                   help="mask threshold on the normalized fused heatmap")
    p.add_argument("--theta-s", type=float, default=0.5,
                   help="saliency gate threshold")
    p.add_argument("--no-saliency", action="store_true",
                   help="skip the saliency gate (ablation)")
    p.add_argument("--epsilon", type=float, default=1e-6,
                   help="floor for the cosine distance in the class weights")


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    cfg = synth.SynthConfig(
        n_classes=args.classes, n_base=args.base_classes,
        height=args.height, width=args.width,
        feature_dim=args.dim, nuisance_dims=args.nuisance_dims,
        embed_dim=args.embed_dim, n_cam=args.n_cam,
        samples_per_class=args.per_class, noise=args.noise,
        separation=args.separation, nuisance_scale=args.nuisance_scale,
        cam_coverage=args.coverage, saliency_noise=args.saliency_noise,
        multi_class_fraction=args.multi_fraction, seed=seed,
    )
    manifest = synth.generate_synthetic_dataset(cfg, args.out)
    _write_config_echo(Path(args.out), "synth", asdict(cfg))
    print(f"wrote {manifest}")
    return 0


def cmd_pseudo_gen(args) -> int:
    dataset = load_manifest(args.manifest)
    config = _pseudo_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "normalization": "per-image min-max before thresholding",
        "samples": [],
    }
    for rec in dataset.samples:
        mask = generate_pseudo_mask(dataset, rec, config)
        save_tensor(mask, out / f"{rec.sample_id}_pseudo.pxt")
        entry = {
            "id": rec.sample_id,
            "foreground_pixels": int((mask != BACKGROUND).sum()),
        }
        if rec.gt_mask_path is not None:
            truth = dataset.load_gt_mask(rec)
            valid = truth != IGNORE_LABEL
            pred_fg = (mask != BACKGROUND) & valid
            true_fg = (truth != BACKGROUND) & valid
            hit = int((pred_fg & true_fg).sum())
            entry["precision"] = hit / max(1, int(pred_fg.sum()))
            entry["recall"] = hit / max(1, int(true_fg.sum()))
        summary["samples"].append(entry)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    _write_config_echo(out, "pseudo-gen", {
        "manifest": str(args.manifest), "tau": args.tau, "theta_s": args.theta_s,
        "use_saliency": not args.no_saliency, "epsilon": args.epsilon,
    })
    print(f"wrote {len(dataset.samples)} pseudo masks to {out}")
    return 0


def cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    dataset = load_manifest(args.manifest)
    config = metalearn.TrainConfig(
        ways=args.ways, shots=args.shots, n_query=args.n_query,
        episodes=args.episodes, learning_rate=args.lr, momentum=args.momentum,
        n_pix=args.n_pix, metric=args.metric,
        loss_variant={"eq5": "eq5", "softmax": "softmax"}[args.loss],
        hidden=(args.hidden, args.hidden), latent_dim=args.latent_dim,
        supervision=args.supervision, seed=seed, pseudo=_pseudo_config(args),
    )
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    params, report = metalearn.meta_train(dataset, config, out=args.out, log=log)
    _write_config_echo(Path(args.out), "train", config.echo())
    with open(Path(args.out) / "train_report.json", "w") as f:
        json.dump(
            {
                "losses": report.losses,
                "wall_time": report.wall_time,
                "params_checksum": report.params_checksum,
                "config": report.config,
            },
            f, indent=2,
        )
    print(f"trained {config.episodes} episodes; checkpoint at {args.out}")
    return 0


def _load_params(args):
    if args.no_encoder:
        return None
    if not args.checkpoint:
        raise PixelMetaError("need --checkpoint or --no-encoder")
    params, _ = load_checkpoint(args.checkpoint)
    return params


def cmd_segment(args) -> int:
    seed = _resolve_seed(args.episode_seed)
    dataset = load_manifest(args.manifest)
    params = _load_params(args)
    mask_for = metalearn.make_mask_provider(
        dataset, args.supervision, _pseudo_config(args)
    )
    episode = sample_episode(
        dataset.samples, dataset.split, args.side,
        args.ways, args.shots, args.n_query, seed=[seed, 0, 0],
    )
    index = build_support_index(
        params, dataset, episode.support, mask_for,
        n_pix=args.n_pix, seed=[seed, 1, 0],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"roster": list(episode.class_roster), "queries": []}
    for rec in episode.query:
        predicted = segment_query(params, index, dataset.load_features(rec),
                                  k=args.knn)
        save_tensor(predicted, out / f"pred_{rec.sample_id}.pxt")
        entry = {"id": rec.sample_id}
        if rec.gt_mask_path is not None:
            acc = evaluate.IoUAccumulator()
            acc.update(predicted, dataset.load_gt_mask(rec), episode.class_roster)
            entry["mean_iou"] = evaluate.mean_iou(acc)
        summary["queries"].append(entry)
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    _write_config_echo(out, "segment", {
        "manifest": str(args.manifest), "episode_seed": seed, "knn": args.knn,
        "ways": args.ways, "shots": args.shots, "n_query": args.n_query,
        "n_pix": args.n_pix, "supervision": args.supervision, "side": args.side,
        "checkpoint": args.checkpoint, "no_encoder": args.no_encoder,
    })
    print(f"segmented {len(episode.query)} queries to {out}")
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    dataset = load_manifest(args.manifest)
    params = _load_params(args)
    config = evaluate.EvalConfig(
        ways=args.ways, shots=args.shots, n_query=args.n_query,
        runs=args.runs, episodes_per_run=args.episodes, knn=args.knn,
        n_pix=args.n_pix, supervision=args.supervision, side=args.side,
        episode_average=args.episode_average, seed=seed,
        pseudo=_pseudo_config(args),
    )
    report = evaluate.run_protocol(dataset, params, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
    _write_config_echo(out.parent, "eval", report.config)
    print(f"mean-IoU over {args.runs} runs: {report.mean:.4f} (std {report.std:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pixelmeta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--base-classes", type=int, default=5)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--dim", type=int, default=12)
    p.add_argument("--nuisance-dims", type=int, default=4)
    p.add_argument("--nuisance-scale", type=float, default=20.0)
    p.add_argument("--separation", type=float, default=0.5)
    p.add_argument("--embed-dim", type=int, default=24)
    p.add_argument("--n-cam", type=int, default=10)
    p.add_argument("--per-class", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--coverage", type=float, default=0.85)
    p.add_argument("--saliency-noise", type=float, default=0.3)
    p.add_argument("--multi-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=_env_int("SEED", None))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pseudo-gen", help="write pseudo masks for every sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_pseudo_flags(p)
    p.set_defaults(func=cmd_pseudo_gen)

    p = sub.add_parser("train", help="meta-train the pixel encoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ways", type=int, default=1)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--n-query", type=int, default=1)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--seed", type=int, default=_env_int("SEED", None))
    p.add_argument("--n-pix", type=int, default=100)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--latent-dim", type=int, default=64)
    p.add_argument("--metric", choices=["sqeuclid", "cosine"], default="sqeuclid")
    p.add_argument("--loss", choices=["eq5", "softmax"], default="eq5")
    p.add_argument("--supervision", choices=["weak", "full"], default="weak")
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true",
                   default=bool(_env_int("VERBOSE", 0)))
    _add_pseudo_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment the queries of one episode")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--no-encoder", action="store_true")
    p.add_argument("--episode-seed", type=int, default=_env_int("SEED", None))
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--ways", type=int, default=1)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--n-query", type=int, default=1)
    p.add_argument("--n-pix", type=int, default=100)
    p.add_argument("--supervision", choices=["weak", "full"], default="weak")
    p.add_argument("--side", choices=["base", "novel"], default="novel")
    p.add_argument("--out", required=True)
    _add_pseudo_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="episodic mean-IoU evaluation protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--no-encoder", action="store_true")
    p.add_argument("--ways", type=int, default=1)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--n-query", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--n-pix", type=int, default=100)
    p.add_argument("--supervision", choices=["weak", "full"], default="weak")
    p.add_argument("--side", choices=["base", "novel"], default="novel")
    p.add_argument("--episode-average", action="store_true")
    p.add_argument("--seed", type=int, default=_env_int("SEED", None))
    p.add_argument("--out", required=True)
    _add_pseudo_flags(p)
    p.set_defaults(func=cmd_eval)

    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=_env_int("THREADS", None),
                        help="cap BLAS threads (best effort)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "threads", None):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except PixelMetaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
