"""Command line: train, eval, predict, export, serve, synth.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
import json
import sys
from pathlib import Path

import click
import numpy as np

from leafcnn import data as dataset
from leafcnn import metrics as metrics_mod
from leafcnn import model as model_mod
from leafcnn import train as train_mod
from leafcnn.errors import DecodeError, FormatError, ManifestError, ShapeError, TrainingDiverged
from leafcnn.service import MODEL_PATH_ENV, ServiceConfig, class_display, run_prediction, run_service

GREEN = "\x1b[32m"
RED = "\x1b[31m"
RESET = "\x1b[0m"


@click.group()
def cli():
    """Plant leaf disease classifier."""


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--epochs", default=15, show_default=True, type=int)
@click.option("--lr", default=1e-4, show_default=True, type=float)
@click.option("--batch", default=32, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--train-fraction", default=0.75, show_default=True, type=float)
@click.option("--input-size", default=256, show_default=True, type=int)
@click.option("--width-divisor", default=1, show_default=True, type=int,
              help="Shrink channel/hidden widths for desk-scale runs.")
@click.option("--no-augment", is_flag=True, help="Disable training augmentation.")
@click.option("--out", "out_dir", default="runs", show_default=True, type=click.Path(file_okay=False))
def train_cmd(data_dir, epochs, lr, batch, seed, train_fraction, input_size,
              width_divisor, no_augment, out_dir):
    """Train on a class-per-directory image tree."""
    manifest = dataset.scan_manifest(data_dir)
    config = train_mod.TrainConfig(learning_rate=lr, batch_size=batch, epochs=epochs,
                                   seed=seed, train_fraction=train_fraction)
    if no_augment:
        config.augment = dataset.AugmentConfig(0.0, 0.0, 0.0, (1.0, 1.0))
    net, records = train_mod.fit(manifest, config, out_dir=out_dir,
                                 input_size=input_size, width_divisor=width_divisor)
    for r in records:
        click.echo(f"epoch {r.epoch:>3}  loss {r.loss:.4f}  acc {r.accuracy:.4f}  "
                   f"val_loss {r.val_loss:.4f}  val_acc {r.val_accuracy:.4f}")
    history_path = Path(out_dir) / "history.csv"
    train_mod.export_history_csv(records, history_path)
    click.echo(f"history written to {history_path}")
    click.echo(f"checkpoints written to {out_dir}")


def _load_any_model(path: str):
    """(network, classes) from either a checkpoint or a frozen bundle."""
    meta = model_mod.read_metadata(path)
    if meta["kind"] == "frozen":
        frozen = model_mod.load_frozen(path)
        return frozen.network, frozen.classes
    net = model_mod.load_checkpoint(path)
    if "classes" in meta:
        classes = [dataset.ClassInfo.from_dict(d) for d in meta["classes"]]
    else:
        classes = dataset.load_class_table()[: net.class_count]
    return net, classes


@cli.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--batch", default=32, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--train-fraction", default=0.75, show_default=True, type=float)
@click.option("--report-json", type=click.Path(dir_okay=False), default=None)
@click.option("--confusion-csv", type=click.Path(dir_okay=False), default=None)
def eval_cmd(data_dir, model_path, batch, seed, train_fraction, report_json, confusion_csv):
    """Evaluate a model on the validation split of a dataset."""
    net, classes = _load_any_model(model_path)
    manifest = dataset.scan_manifest(data_dir)
    _, val_samples = dataset.split(manifest.samples, train_fraction, seed)
    if not val_samples:
        raise ManifestError("validation split is empty")
    size = net.input_shape[0]
    true_labels, predicted = [], []
    for b in dataset.batches(val_samples, batch, 0, size=size):
        probs, _ = model_mod.forward(net, b.inputs, mode="eval")
        predicted.extend(int(i) for i in np.argmax(probs, axis=1))
        true_labels.extend(int(label) for label in b.labels)
    cm = metrics_mod.confusion(true_labels, predicted, net.class_count)
    report = metrics_mod.compute_metrics(cm)
    names = [f"{c.plant} {c.condition}" for c in classes]
    click.echo(metrics_mod.format_report(report, names))
    if report_json:
        Path(report_json).write_text(json.dumps(metrics_mod.report_to_dict(report), indent=2))
        click.echo(f"report written to {report_json}")
    if confusion_csv:
        metrics_mod.export_confusion_csv(cm, names, confusion_csv)
        click.echo(f"confusion matrix written to {confusion_csv}")


@cli.command("predict")
@click.option("--model", "model_path", envvar=MODEL_PATH_ENV, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--top-k", default=5, show_default=True, type=int)
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
def predict_cmd(model_path, top_k, images):
    """Classify images with a frozen bundle; one row per image."""
    frozen = model_mod.load_frozen(model_path)
    for image_path in images:
        result = run_prediction(frozen, Path(image_path).read_bytes(), top_k)
        color = GREEN if result["status_color"] == "green" else RED
        click.echo(
            f"{color}{result['status_emoji']} {result['plant_emoji']} "
            f"{result['plant']:<12} {result['condition']:<30} "
            f"{metrics_mod.format_percent(result['confidence']):>8}{RESET}  {image_path}"
        )


@cli.command("export")
@click.option("--checkpoint", "checkpoint_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def export_cmd(checkpoint_path, out_path):
    """Freeze a checkpoint into a self-contained inference bundle."""
    net = model_mod.load_checkpoint(checkpoint_path)
    meta = model_mod.read_metadata(checkpoint_path)
    if "classes" in meta:
        classes = [dataset.ClassInfo.from_dict(d) for d in meta["classes"]]
    elif net.class_count == 38:
        classes = dataset.load_class_table()
    else:
        raise ManifestError(
            f"checkpoint lacks class metadata and has {net.class_count} outputs; retrain to regenerate"
        )
    model_mod.export_frozen(net, classes, out_path)
    click.echo(f"frozen bundle written to {out_path} ({Path(out_path).stat().st_size} bytes)")


@cli.command("serve")
@click.option("--model", "model_path", envvar=MODEL_PATH_ENV, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", type=click.Path(file_okay=False, exists=True), default=None,
              help="Directory with the web UI bundle to host at /.")
@click.option("--max-upload", default=10 * 1024 * 1024, show_default=True, type=int)
@click.option("--top-k", default=5, show_default=True, type=int)
def serve_cmd(model_path, port, host, static_dir, max_upload, top_k):
    """Run the inference service."""
    config = ServiceConfig(model_path=model_path, port=port, max_upload_bytes=max_upload,
                           top_k=top_k, static_dir=static_dir)
    run_service(config, host=host)


@cli.command("synth")
@click.option("--classes", "n_classes", default=4, show_default=True, type=int)
@click.option("--per-class", default=8, show_default=True, type=int)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--size", default=64, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def synth_cmd(n_classes, per_class, seed, size, out_dir):
    """Generate a synthetic desk-scale dataset."""
    dataset.generate_synthetic_dataset(n_classes, per_class, seed, out_dir, size=size)
    click.echo(f"wrote {n_classes * per_class} images under {out_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except (ShapeError, FormatError, DecodeError, ManifestError, TrainingDiverged,
            ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
