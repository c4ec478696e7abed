"""Command-line front end wiring the pipeline together.

Subcommands: train-gmm, extract-features, train-model, score, evaluate,
describe.  Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import corpus, lfcc, multiscale
from .config import load_config
from .errors import ConfigError, LgpnetError
from .evaluation import ScoreRecord, compute_eer_records, score_file_read, score_file_write
from .gmm import train_by_splitting
from .model import build_model, load_checkpoint, score
from .training import predict_logits, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgpnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-gmm", help="train the multi-order GMM bank by binary splitting")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out", required=True, help="directory for the gmm_<order>.bin files")
    p.add_argument("--order", type=int, default=None, help="largest order to train")
    p.add_argument("--iters", type=int, default=None, help="EM iterations per split level")
    p.add_argument("--config", default=None)

    p = sub.add_parser("extract-features", help="write per-utterance feature cache records")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--cache-dir", required=True)
    p.add_argument("--kind", choices=["lfcc", "lgp"], default="lfcc")
    p.add_argument("--gmm-dir", default=None, help="bank directory (required for --kind lgp)")
    p.add_argument("--config", default=None)

    p = sub.add_parser("train-model", help="train the grouped residual network ensemble")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--gmm-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dev-protocol", default=None)
    p.add_argument("--dev-audio-dir", default=None)
    p.add_argument("--log", default=None, help="append-only CSV epoch log")
    p.add_argument("--config", default=None)

    p = sub.add_parser("score", help="score utterances with a trained checkpoint")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--gmm-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("evaluate", help="compute the EER of a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--protocol", required=True)

    p = sub.add_parser("describe", help="print configuration and parameter counts")
    p.add_argument("--config", default=None)
    return parser


def _manifest(protocol: str, audio_dir: str, split: str = "train") -> corpus.Manifest:
    return corpus.build_manifest(corpus.parse_protocol(protocol), audio_dir, split=split)


def _pooled_lfcc_frames(manifest: corpus.Manifest, cfg) -> np.ndarray:
    frames = [
        lfcc.lfcc_extract(corpus.read_wav(path, utt_id=label.utt_id), cfg.lfcc).values
        for path, label in manifest.entries
    ]
    return np.vstack(frames)


def _cmd_train_gmm(args) -> int:
    cfg = load_config(args.config)
    if args.iters is not None:
        cfg.em.n_iterations = args.iters
    orders = sorted(cfg.bank_orders)
    target = args.order if args.order is not None else max(orders)
    orders = [o for o in orders if o <= target]
    if not orders or orders[-1] != target:
        raise ConfigError(f"--order {target} is not one of the bank orders {cfg.bank_orders}")
    manifest = _manifest(args.protocol, args.audio_dir)
    data = _pooled_lfcc_frames(manifest, cfg)
    print(f"training GMMs up to order {target} on {data.shape[0]} frames of dim {data.shape[1]}")
    models = train_by_splitting(data, target, cfg.em)
    by_order = {g.order: g for g in models}
    bank = multiscale.GmmBank(gmms=[by_order[o] for o in orders])
    multiscale.save_bank(bank, args.out)
    print(f"saved orders {orders} under {args.out}")
    return 0


def _cmd_extract_features(args) -> int:
    cfg = load_config(args.config)
    manifest = _manifest(args.protocol, args.audio_dir)
    cache_dir = Path(args.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    bank = None
    if args.kind == "lgp":
        if args.gmm_dir is None:
            raise ConfigError("--gmm-dir is required when extracting LGP features")
        bank = multiscale.load_bank(args.gmm_dir)
    for path, label in manifest.entries:
        clip = corpus.read_wav(path, utt_id=label.utt_id)
        if args.kind == "lfcc":
            feat = lfcc.fix_length(lfcc.lfcc_extract(clip, cfg.lfcc), cfg.target_frames)
        else:
            feat = multiscale.utterance_lgp(clip, bank, cfg.lfcc, cfg.target_frames)
        lfcc.write_feature_record(cache_dir / f"{label.utt_id}.feat", label.utt_id, feat)
    print(f"wrote {len(manifest)} {args.kind} records to {cache_dir}")
    return 0


def _grouping(cfg, bank: multiscale.GmmBank) -> multiscale.GroupAssignment:
    if cfg.grouping == "random":
        return multiscale.random_grouping(bank, cfg.n_groups, cfg.grouping_seed)
    return multiscale.lineage_grouping(bank, cfg.n_groups)


def _cmd_train_model(args) -> int:
    cfg = load_config(args.config)
    manifest = _manifest(args.protocol, args.audio_dir)
    dev_manifest = None
    if args.dev_protocol is not None:
        dev_manifest = _manifest(
            args.dev_protocol, args.dev_audio_dir or args.audio_dir, split="dev"
        )
    bank = multiscale.load_bank(args.gmm_dir)
    if bank.orders != sorted(cfg.bank_orders):
        raise ConfigError(f"bank orders {bank.orders} do not match config {sorted(cfg.bank_orders)}")
    assignment = _grouping(cfg, bank)
    _, log_rows = train(
        manifest,
        bank,
        assignment,
        cfg.model_cfg(),
        cfg.train,
        dev_manifest=dev_manifest,
        lfcc_cfg=cfg.lfcc,
        target_frames=cfg.target_frames,
        checkpoint_path=args.checkpoint,
        log_path=args.log,
    )
    best = min(row["dev_loss"] for row in log_rows)
    print(f"trained {len(log_rows)} epochs; best monitored loss {best:.6f}")
    print(f"checkpoint written to {args.checkpoint}")
    return 0


def _cmd_score(args) -> int:
    cfg = load_config(args.config)
    manifest = _manifest(args.protocol, args.audio_dir, split="eval")
    bank = multiscale.load_bank(args.gmm_dir)
    model, assignment = load_checkpoint(args.checkpoint)
    feats, _, utt_ids = multiscale.manifest_lgp_features(
        manifest, bank, cfg.lfcc, cfg.target_frames
    )
    logits = predict_logits(model, assignment, feats, batch_size=cfg.train.batch_size)
    scores = logits[:, 1] - logits[:, 0]
    records = [ScoreRecord(utt_id=u, score=float(s)) for u, s in zip(utt_ids, scores)]
    score_file_write(args.out, records)
    print(f"wrote {len(records)} scores to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    records = score_file_read(args.scores)
    labels = {lab.utt_id: lab.key for lab in corpus.parse_protocol(args.protocol)}
    result = compute_eer_records(records, labels)
    print(f"EER: {100.0 * result.eer:.4f}%")
    print(f"threshold: {result.threshold!r}")
    return 0


def _cmd_describe(args) -> int:
    cfg = load_config(args.config)
    model_cfg = cfg.model_cfg()
    print("bank orders:", cfg.bank_orders)
    print("lgp dimension:", sum(cfg.bank_orders))
    print(f"groups: {model_cfg.n_groups} (input {model_cfg.group_input_dim} dims each)")
    print(f"blocks per branch: {model_cfg.n_blocks} ({model_cfg.block.channels} channels, "
          f"kernel {model_cfg.block.kernel}, improved={model_cfg.improved_blocks}, mfa={model_cfg.mfa})")
    print(f"em: {cfg.em.n_iterations} iterations, split_epsilon {cfg.em.split_epsilon}")
    print(f"train: lr {cfg.train.learning_rate}, batch {cfg.train.batch_size}, "
          f"epochs {cfg.train.epochs}, ensemble_aware={cfg.train.ensemble_aware}")
    model = build_model(model_cfg, seed=0)
    print("parameters:")
    breakdown = model.describe()
    total = breakdown.pop("total")
    for name, count in breakdown.items():
        print(f"  {name}: {count}")
    print(f"  total: {total}")
    return 0


_COMMANDS = {
    "train-gmm": _cmd_train_gmm,
    "extract-features": _cmd_extract_features,
    "train-model": _cmd_train_model,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "describe": _cmd_describe,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except (LgpnetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
