"""Command-line harness: ``ganprint <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every subcommand
takes ``--seed``; its default comes from ``GANPRINT_SEED`` (else 0).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import attribution as attr
from .attack import AttackConfig, evaluate_attack
from .imaging import (ImageIOError, env_seed, load_dataset, load_image, make_rng, save_dataset,
                      save_image, synth_texture_dataset)
from .report import emit_report
from .toynet.network import ModelFormatError, default_generator, load_model, save_model
from .toynet.training import TrainConfig, TriggerSpec, default_trigger, hue_shift, train
from .watermark import (EmbedKey, FingerprintCode, epoch_sweep, fingerprint_dataset, score_outputs,
                        verify_trigger)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _fmt(args) -> str:
    return "markdown" if getattr(args, "markdown", False) else "csv"


# ------------------------------------------------------------ subcommands

def cmd_synth(args):
    if args.families:
        d = attr.family_dataset(args.n, args.size, args.seed)
    else:
        d = synth_texture_dataset(args.n, args.size, make_rng(args.seed))
    path = save_dataset(d, args.out)
    print(f"wrote {len(d)} images and {path}")


def cmd_trigger(args):
    trig = default_trigger(args.size)
    save_image(trig.trigger_image, args.trigger)
    save_image(trig.watermark_target, args.target)
    print(f"wrote {args.trigger} and {args.target}")


def _train_config(args, **overrides) -> TrainConfig:
    kw = dict(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size, seed=args.seed,
              optimizer=args.optimizer)
    kw.update(overrides)
    return TrainConfig(**kw)


def cmd_train(args):
    data = load_dataset(args.data)
    trig = None
    if args.trigger or args.target:
        if not (args.trigger and args.target):
            raise ValueError("--trigger and --target must be given together")
        trig = TriggerSpec(load_image(args.trigger), load_image(args.target))
    cfg = _train_config(args, lambda_trigger=args.lam if trig is not None else 0.0)
    net, trace = train(default_generator(args.seed, hidden=args.hidden), data.images,
                       hue_shift(data.images), cfg, trigger=trig)
    save_model(net, args.out)
    if args.loss_csv:
        emit_report([{"epoch": e, "loss": v} for e, v in enumerate(trace)], args.loss_csv, raw=True)
    print(f"wrote {args.out} (final loss {trace[-1]:.6g})")


def cmd_verify_trigger(args):
    net = load_model(args.model)
    trig = TriggerSpec(load_image(args.trigger), load_image(args.target))
    present, value = verify_trigger(net, trig, args.threshold)
    print(f"{'WATERMARK PRESENT' if present else 'WATERMARK ABSENT'} (PSNR {value:.2f} dB, "
          f"threshold {args.threshold:g} dB)")


def cmd_attack(args):
    net = load_model(args.model)
    data = load_dataset(args.data)
    cfg = AttackConfig(args.epsilon, args.alpha, args.iters, args.seed, args.random_start)
    name = args.model_name or Path(args.model).stem
    dname = args.dataset_name or Path(args.data).name
    reports = [evaluate_attack(net, data, cfg, "pgd", name, dname)]
    if args.baseline == "random":
        reports.append(evaluate_attack(net, data, cfg, "random", name, dname))
    columns = ["Model", "Dataset", "Method", "L1", "L2", "FD32"]
    emit_report([r.table_row() for r in reports], args.report, _fmt(args), columns, args.raw)
    if args.per_image:
        rows = [row for r in reports for row in r.image_rows(data.ids)]
        emit_report(rows, args.per_image, "csv",
                    ["Model", "Dataset", "Method", "Image", "L1", "L2", "Linf"], args.raw)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, r in zip(data.ids, reports[0].per_image):
            save_image(r.adversarial_input, out / f"{i}.png")
    for r in reports:
        print(f"{r.method}: L1 {r.mean_l1:.4f}  L2 {r.mean_l2:.4f}  FD32 {r.fd32:.4f}")


def _code_and_key(args) -> tuple[FingerprintCode, EmbedKey]:
    if args.code:
        code = FingerprintCode.from_hex(args.code, args.bits)
    else:
        code = FingerprintCode.random(args.bits, make_rng(args.seed))
    return code, EmbedKey(args.key, args.strength)


def cmd_watermark(args):
    code, key = _code_and_key(args)
    data = load_dataset(args.data)
    if args.action == "embed":
        if not args.out:
            raise ValueError("watermark embed needs --out")
        marked = fingerprint_dataset(data, code, key, args.fraction, args.seed)
        save_dataset(marked, args.out)
        print(f"embedded code {code.to_hex()} into {args.out}")
        return
    rep = score_outputs(data.images, code, key)
    if args.report:
        emit_report([{"bit_accuracy": rep.bit_accuracy, "min_accuracy": rep.min_accuracy,
                      "max_accuracy": rep.max_accuracy}], args.report, _fmt(args))
    print(f"bit accuracy {rep.bit_accuracy:.4f} (min {rep.min_accuracy:.4f}, max {rep.max_accuracy:.4f})")


def cmd_sweep(args):
    code, key = _code_and_key(args)
    clean = synth_texture_dataset(args.n, args.size, make_rng(args.seed))
    heldout = synth_texture_dataset(args.heldout, args.size, make_rng(args.seed + 1), prefix="heldout")
    size = None if args.translation else (args.size, args.size)
    base = default_generator(args.seed, bias_map_size=size)
    cfg = _train_config(args, checkpoint_every=args.checkpoint_every)
    reports = epoch_sweep(base, clean, code, key, cfg, heldout, args.fraction)
    rows = [{"epoch": r.epoch, "bit_accuracy": r.bit_accuracy, "min_accuracy": r.min_accuracy,
             "max_accuracy": r.max_accuracy} for r in reports]
    emit_report(rows, args.report, _fmt(args))
    print(f"final bit accuracy {reports[-1].bit_accuracy:.4f} over {len(reports)} checkpoints")


def cmd_attribute(args):
    if args.action == "check-paper-tables":
        results = attr.check_published_tables()
        for name, printed, got, ok in results:
            print(f"{name:12s} printed {printed}  recomputed {got}  {'ok' if ok else 'MISMATCH'}")
        if not all(r[3] for r in results):
            print("FAIL")
            return 1
        print("PASS")
        return 0
    if args.action == "train":
        if not args.out:
            raise ValueError("attribute train needs --out")
        if args.data:
            data = load_dataset(args.data)
        else:
            data = attr.family_dataset(args.n_per_class, args.size, args.seed)
        tr, te = attr.stratified_split(data, args.train_fraction, make_rng(args.seed))
        p = attr.train_classifier(attr.features_of(tr), tr.labels, args.l2, args.epochs, args.lr, args.seed)
        attr.save_classifier(p, args.out)
        if len(te) == 0:
            print(f"wrote {args.out} (no held-out split to evaluate)")
            return 0
    else:
        if not (args.classifier and args.data):
            raise ValueError("attribute eval needs --classifier and --data")
        p = attr.load_classifier(args.classifier)
        te = load_dataset(args.data)
    m = attr.evaluate(p, attr.features_of(te), te.labels)
    if args.confusion:
        text = m.to_markdown() if args.markdown else m.to_csv()
        Path(args.confusion).write_text(text, encoding="utf-8")
    print(f"test accuracy {m.accuracy:.4f} on {m.total} images")
    return 0


def cmd_pipeline(args):
    """Every stage at desk scale into one directory; reruns are byte-identical."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s = args.seed
    train_d = synth_texture_dataset(64, 32, make_rng(s))
    save_dataset(train_d, out / "train")
    test_d = synth_texture_dataset(args.attack_images, 64, make_rng(s + 1), prefix="test")
    save_dataset(test_d, out / "test")

    trig = default_trigger(32)
    save_image(trig.trigger_image, out / "trigger.png")
    save_image(trig.watermark_target, out / "watermark_target.png")
    rows = []
    for lam, name in ((0.0, "model_plain"), (1.0, "model_trigger")):
        net, trace = train(default_generator(s), train_d.images, hue_shift(train_d.images),
                           TrainConfig(seed=s, lambda_trigger=lam), trigger=trig)
        save_model(net, out / f"{name}.gpnt")
        emit_report([{"epoch": e, "loss": v} for e, v in enumerate(trace)], out / f"{name}_loss.csv", raw=True)
        present, value = verify_trigger(net, trig)
        rows.append({"model": name, "lambda": lam, "trigger_psnr": value, "watermark_present": present})
    emit_report(rows, out / "trigger_report.csv")

    plain = load_model(out / "model_plain.gpnt")
    cfg = AttackConfig(seed=s)
    reports = [evaluate_attack(plain, test_d, cfg, m, "toy_hue_shift", "textures64") for m in ("pgd", "random")]
    emit_report([r.table_row() for r in reports], out / "attack_report.csv")
    emit_report([r.table_row() for r in reports], out / "attack_report.md", "markdown")

    code = FingerprintCode.random(64, make_rng(s))
    key = EmbedKey(s + 42)
    clean = synth_texture_dataset(32, 64, make_rng(s + 2), prefix="wm")
    heldout = synth_texture_dataset(16, 64, make_rng(s + 3), prefix="heldout")
    fingerprint_dataset(clean, code, key)  # validates geometry before the long run
    sweep = epoch_sweep(default_generator(s, bias_map_size=(64, 64)), clean, code, key,
                        TrainConfig(epochs=40, seed=s, checkpoint_every=2), heldout)
    emit_report([{"epoch": r.epoch, "bit_accuracy": r.bit_accuracy, "min_accuracy": r.min_accuracy,
                  "max_accuracy": r.max_accuracy} for r in sweep], out / "sweep_report.csv")

    fam = attr.family_dataset(250, 64, s)
    tr, te = attr.stratified_split(fam, 0.8, make_rng(s))
    p = attr.train_classifier(attr.features_of(tr), tr.labels, seed=s)
    attr.save_classifier(p, out / "classifier.gpcl")
    m = attr.evaluate(p, attr.features_of(te), te.labels)
    (out / "confusion.csv").write_text(m.to_csv(), encoding="utf-8")
    published = [{"class": n, "printed": pr, "recomputed": g, "match": ok} for n, pr, g, ok in attr.check_published_tables()]
    emit_report(published, out / "published_tables.csv")
    print(f"pipeline artifacts in {out}: trigger PSNR {rows[1]['trigger_psnr']:.2f} dB, "
          f"PGD L2 {reports[0].mean_l2:.4f} vs noise {reports[1].mean_l2:.4f}, "
          f"sweep final {sweep[-1].bit_accuracy:.4f}, attribution accuracy {m.accuracy:.4f}")


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    seed_default = env_seed(0)
    parser = argparse.ArgumentParser(prog="ganprint", description="Generative-model forensics harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=seed_default, help="RNG seed (default: $GANPRINT_SEED or 0)")
        p.set_defaults(func=func)
        return p

    def add_training(p, epochs=100):
        p.add_argument("--epochs", type=_nonneg_int, default=epochs)
        p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
        p.add_argument("--batch-size", type=_positive_int, default=8)
        p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")

    def add_code(p):
        p.add_argument("--code", help="fingerprint as hex (default: random from --seed)")
        p.add_argument("--bits", type=_positive_int, default=64)
        p.add_argument("--key", type=int, default=42)
        p.add_argument("--strength", type=float, default=2.0)

    p = add("synth", cmd_synth, "write a seeded texture dataset")
    p.add_argument("--n", type=_positive_int, required=True, help="image count (per class with --families)")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--families", action="store_true", help="procedural families plus Real, labelled")
    p.add_argument("--out", required=True)

    p = add("trigger", cmd_trigger, "write the default trigger image and watermark target")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--trigger", required=True)
    p.add_argument("--target", required=True)

    p = add("train", cmd_train, "train a toy generator on the hue-shift task")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_training(p)
    p.add_argument("--hidden", type=_positive_int, default=8)
    p.add_argument("--trigger")
    p.add_argument("--target")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="trigger weight (with --trigger)")
    p.add_argument("--loss-csv")

    p = add("verify-trigger", cmd_verify_trigger, "check a model's response to a trigger")
    p.add_argument("--model", required=True)
    p.add_argument("--trigger", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--threshold", type=float, default=25.0)

    p = add("attack", cmd_attack, "PGD disruption with an L1/L2/FD32 report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=None, help="step size (default epsilon/4)")
    p.add_argument("--iters", type=_nonneg_int, default=20)
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--baseline", choices=("none", "random"), default="none")
    p.add_argument("--report", required=True)
    p.add_argument("--per-image")
    p.add_argument("--out-dir", help="write attacked inputs as PNG")
    p.add_argument("--model-name")
    p.add_argument("--dataset-name")
    p.add_argument("--markdown", action="store_true")
    p.add_argument("--raw", action="store_true", help="full-precision numbers")

    p = add("watermark", cmd_watermark, "embed or decode dataset fingerprints")
    p.add_argument("action", choices=("embed", "decode"))
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--report")
    p.add_argument("--markdown", action="store_true")
    add_code(p)

    p = add("sweep", cmd_sweep, "bit accuracy versus training epoch")
    p.add_argument("--n", type=_positive_int, default=32)
    p.add_argument("--heldout", type=_positive_int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--checkpoint-every", type=_positive_int, default=5)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--translation", action="store_true", help="no bias map (pure conv model)")
    p.add_argument("--report", required=True)
    p.add_argument("--markdown", action="store_true")
    add_training(p, epochs=50)
    add_code(p)

    p = add("attribute", cmd_attribute, "spectral attribution and published confusion-table checks")
    p.add_argument("action", choices=("train", "eval", "check-paper-tables"))
    p.add_argument("--data", help="labelled dataset (train: default builds families in memory)")
    p.add_argument("--n-per-class", type=_positive_int, default=250)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--epochs", type=_nonneg_int, default=300)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--classifier")
    p.add_argument("--out")
    p.add_argument("--confusion")
    p.add_argument("--markdown", action="store_true")

    p = add("pipeline", cmd_pipeline, "run every stage and write all artifacts")
    p.add_argument("--out", required=True)
    p.add_argument("--attack-images", type=_positive_int, default=50)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        status = args.func(args)
    except (ValueError, OSError, ImageIOError, ModelFormatError, attr.ClassifierFormatError,
            ArithmeticError, RuntimeError) as exc:
        print(f"ganprint {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
