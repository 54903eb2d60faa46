"""Command-line front end: ``attackgen train | attack | evaluate``.

Exit codes: 0 ok, 2 bad flags, 3 training diverged, 4 spec validation
failed, 5 runtime attack error, 6 shape mismatch.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets, fileio, models, perturb
from . import taxonomy as tx
from .errors import AttackGenError, ShapeError, TrainingDiverged, ValidationError

log = logging.getLogger("attackgen")

EXIT_OK, EXIT_FLAGS, EXIT_DIVERGED, EXIT_INVALID, EXIT_RUNTIME, EXIT_SHAPE = 0, 2, 3, 4, 5, 6

DEFAULT_DATA = {"linear": "blobs", "mlp": "blobs", "cnn-classifier": "patterns", "conv-segmenter": "shapes"}
DEFAULT_EPOCHS = {"linear": 200, "mlp": 100, "cnn-classifier": 30, "conv-segmenter": 40}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_FLAGS)


def build_parser():
    p = _Parser(prog="attackgen", description="Compose, run and evaluate adversarial attacks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a victim model")
    t.add_argument("--arch", required=True, choices=models.ARCHS)
    t.add_argument("--data", help="dataset id, e.g. blobs:n=200 or shapes:n=200,H=16")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--out", default=".")

    a = sub.add_parser("attack", help="run an attack spec against a model")
    a.add_argument("--spec", required=True, help="spec JSON file or preset:NAME")
    a.add_argument("--model", help="weight file (defaults to the spec's model)")
    a.add_argument("--data", help="dataset id override")
    a.add_argument("--out", default=".")
    a.add_argument("--seed", type=int)
    a.add_argument("--samples", type=int, default=3, help="number of image triptychs to write")
    a.add_argument("--epsilon", type=float, help="override the constraint radius")
    a.add_argument("--gamma", type=float, help="override the penalty weight")

    e = sub.add_parser("evaluate", help="apply a saved perturbation to a (victim) model")
    e.add_argument("--perturbation", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--spec", help="spec whose specificity defines success (default: untargeted)")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", default=".")
    return p


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_train(args):
    data_id = args.data or DEFAULT_DATA[args.arch]
    ds = datasets.from_id(data_id, seed=args.seed)
    epochs = DEFAULT_EPOCHS[args.arch] if args.epochs is None else args.epochs
    if epochs < 0:
        raise ValueError("--epochs must be >= 0")
    model = models.train(args.arch, ds, epochs, seed=args.seed, lr=args.lr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models.save_weights(model, out / "model.agt")
    metrics = {k: v for k, v in model.metrics.items()}
    metrics.update({"arch": args.arch, "data": data_id, "input_shape": list(model.input_shape),
                    "n_classes": model.n_classes})
    _write_json(out / "train_metrics.json", metrics)
    print(f"wrote {out / 'model.agt'}")
    return EXIT_OK


def _load_spec(arg):
    if arg.startswith("preset:"):
        return tx.preset(arg.split(":", 1)[1])
    return tx.load_spec(arg)


def _class_counts(labels, cls):
    return [int(v) for v in (labels == cls).reshape(len(labels), -1).sum(1)]


def build_report(runnable, result, wall_time):
    """Run report: spec echo, clean and adversarial metrics, perturbation stats."""
    model = runnable.model
    obj = runnable.objective
    spec = runnable.spec
    if obj is not None:
        xs, ys = obj.xs, obj.ys
        adv_xs = obj.adversarial(result.perturbation)
    else:
        xs, ys = runnable.x[None], np.asarray([runnable.y])
        adv_xs = xs + result.perturbation[None]
    clean = model.predict_labels(xs)
    adv = model.predict_labels(adv_xs)
    rep = result.representation
    pert = perturb.Flow(result.perturbation) if rep == "flow" else perturb.Additive(result.perturbation)
    report = {
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "tags": result.tags,
        "components": result.components,
        "clean": {"accuracy": float((clean == ys).mean())} if ys is not None else {},
        "adversarial": {
            "success": bool(result.success),
            "success_rate": float(result.success_rate),
            "per_item_success": result.per_item_success,
            "accuracy": float((adv == ys).mean()) if ys is not None else None,
        },
        "measures": result.measures,
        "perturbation": perturb.perturbation_stats(pert),
        "trace": result.trace,
        "iterations": result.iterations,
        "queries": int(result.queries),
        "flags": result.flags,
        "wall_time": float(wall_time),
    }
    if model.is_segmenter:
        report["adversarial"]["per_pixel_success_rate"] = float(result.success_rate)
        cls = getattr(result.variant, "target_class", None)
        if cls is None and spec.specificity.get("remove_class") is not None:
            cls = int(spec.specificity["remove_class"])
        if cls is not None:
            report["target_class"] = int(cls)
            report["adversarial"]["target_pixels_before"] = _class_counts(clean, cls)
            report["adversarial"]["target_pixels_after"] = _class_counts(adv, cls)
    return report, xs, clean, adv, adv_xs


def _write_images(out, xs, clean, adv, adv_xs, result, limit, is_segmenter):
    if xs.ndim != 4:
        return []
    paths = []
    for i in range(min(limit, len(xs))):
        p = out / f"sample_{i:03d}_adv.ppm"
        fileio.write_ppm(p, adv_xs[i])
        paths.append(p)
        if is_segmenter:
            p = out / f"sample_{i:03d}_triptych.ppm"
            fileio.write_ppm(p, fileio.triptych(xs[i], clean[i], adv[i]))
            paths.append(p)
    if result.representation == "flow":
        paths += fileio.write_flow_pgms(str(out / "flow"), result.perturbation)
    return paths


def cmd_attack(args):
    spec = _load_spec(args.spec)
    spec = spec.with_overrides(epsilon=args.epsilon, gamma=args.gamma, seed=args.seed,
                               model=args.model, data=args.data)
    violations = tx.validate(spec)
    if violations:
        raise ValidationError(violations)
    t0 = time.perf_counter()
    runnable = tx.assemble(spec)
    result = runnable.run()
    wall = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, xs, clean, adv, adv_xs = build_report(runnable, result, wall)
    box = spec.admissible.get("box")
    fileio.write_perturbation(out / "perturbation.agt", result.perturbation, result.representation,
                              None if box is None else tuple(box))
    _write_json(out / "report.json", report)
    _write_images(out, xs, clean, adv, adv_xs, result, max(args.samples, 0), runnable.handle.is_segmenter)
    print(f"success_rate={result.success_rate:.4f} queries={result.queries} wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_evaluate(args):
    delta, rep, box = fileio.read_perturbation(args.perturbation)
    victim = models.load_weights(args.model)
    ds = datasets.from_id(args.data, seed=args.seed)
    variant = None
    if args.spec:
        spec = _load_spec(args.spec)
        variant = tx.build_specificity(spec.specificity, victim, ds)
    report = tx.transfer_evaluate(delta, victim, ds, variant=variant, box=box, representation=rep)
    report.update({"perturbation_file": str(args.perturbation), "model": str(args.model), "data": args.data})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "evaluation.json", report)
    print(f"transfer_success_rate={report['transfer_success_rate']:.4f}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "evaluate": cmd_evaluate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ShapeError as exc:
        print(f"error: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except (AttackGenError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
