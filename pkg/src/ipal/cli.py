"""Single entry point for the pipeline:
transcribe -> state -> gen/inject -> train -> detect -> eval -> compare.

Stages communicate only through files.  Every run drops a manifest
(tool version, options, input and output digests) next to its first
output, so any result can be reproduced from the manifest alone.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.  Errors are emitted
as one JSON object on stderr.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys

import click

from . import __version__, detectors  # noqa: F401  (import registers detectors)
from . import attacks, detect as detect_mod, evaluate, model, plotting, states, traffic
from . import modbus as modbus_mod
from . import transcribe as transcribe_mod
from .errors import DataError, UsageError

log = logging.getLogger("ipal")


def _digest_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(command: str, options: dict, inputs: list[str],
                    outputs: list[str]) -> None:
    manifest = {
        "tool": "ipal",
        "version": __version__,
        "command": command,
        "options": {k: v for k, v in sorted(options.items()) if v is not None},
        "inputs": {p: _digest_file(p) for p in inputs if p},
        "outputs": {p: _digest_file(p) for p in outputs if p},
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w", encoding="ascii", newline="\n") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _read_stream(path: str):
    """Message or state records, decided by file extension."""
    if path.endswith(".state"):
        return list(model.read_states(path))
    if path.endswith(".ipal"):
        return list(model.read_messages(path))
    raise UsageError(f"cannot tell stream kind of {path!r} (expect .ipal or .state)")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return json.load(fp)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from None


def _parse_window(text: str) -> tuple[float, float]:
    try:
        start, end = text.split(":")
        return float(start), float(end)
    except ValueError:
        raise UsageError(f"bad window {text!r}, expected start:end") from None


@click.group()
@click.version_option(version=__version__, prog_name="ipal")
@click.option("--log-level", default="warning", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]))
def cli(log_level: str) -> None:
    """Protocol-independent industrial intrusion detection toolkit."""
    logging.basicConfig(level=log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--protocol", default="modbus", show_default=True)
@click.option("--pcap", "pcap_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True)
@click.option("--port", default=modbus_mod.MODBUS_PORT, show_default=True, type=int)
@click.option("--labels", "labels_path", type=click.Path(exists=True),
              help="attack-interval list used to label messages")
@click.option("--activity-map", "activity_map_path", type=click.Path(exists=True),
              help='JSON {"read": [codes], "write": [codes]} overriding the default')
@click.option("--correlation-window", default=30.0, show_default=True, type=float)
def transcribe(protocol, pcap_path, rules_path, out_path, port, labels_path,
               activity_map_path, correlation_window):
    """Convert a capture file into a message stream."""
    if protocol != "modbus":
        raise UsageError(f"no dissector registered for protocol {protocol!r}")
    rules = modbus_mod.load_rules(rules_path) if rules_path else []
    labels = []
    if labels_path:
        labels = [(s.start, s.end) for s in evaluate.load_scenarios(labels_path)]
    activity_map = _load_json(activity_map_path) if activity_map_path else None

    run = transcribe_mod.transcribe(
        pcap_path, rules=rules, port=port, labels=labels,
        activity_map=activity_map, correlation_window=correlation_window)
    model.write_messages(out_path, iter(run))
    click.echo(json.dumps(run.summary))
    _write_manifest("transcribe", {
        "protocol": protocol, "pcap": pcap_path, "rules": rules_path,
        "port": port, "labels": labels_path, "activity_map": activity_map_path,
        "correlation_window": correlation_window,
    }, [pcap_path, rules_path or "", labels_path or ""], [out_path])


@cli.group(invoke_without_command=True)
@click.option("--in", "in_path", type=click.Path(exists=True))
@click.option("--interval", type=float, default=1.0, show_default=True)
@click.option("--start-policy", default="aligned-to-epoch", show_default=True,
              type=click.Choice(["aligned-to-epoch", "first-message"]))
@click.option("--out", "out_path")
@click.pass_context
def state(ctx, in_path, interval, start_policy, out_path):
    """Aggregate a message stream into periodic state snapshots."""
    if ctx.invoked_subcommand is not None:
        return
    if not in_path or not out_path:
        raise UsageError("state aggregation needs --in and --out")
    cfg = states.AggregatorConfig(interval=interval, start_policy=start_policy)
    count = model.write_states(
        out_path, states.aggregate(model.read_messages(in_path), cfg))
    click.echo(json.dumps({"states": count}))
    _write_manifest("state", {"in": in_path, "interval": interval,
                              "start_policy": start_policy}, [in_path], [out_path])


@state.command(name="import")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True)
def state_import(csv_path, map_path, out_path):
    """Restore pre-computed states from a delimited log."""
    cmap = states.load_column_map(map_path)
    count = model.write_states(out_path, states.import_state_csv(csv_path, cmap))
    click.echo(json.dumps({"states": count}))
    _write_manifest("state import", {"csv": csv_path, "map": map_path},
                    [csv_path, map_path], [out_path])


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="override the spec's seed")
@click.option("--out", "out_path", required=True)
def gen(spec_path, seed, out_path):
    """Generate a deterministic benign synthetic stream."""
    spec = traffic.load_scenario(spec_path)
    if seed is not None:
        spec.seed = seed
    count = model.write_messages(out_path, traffic.generate(spec))
    click.echo(json.dumps({"messages": count}))
    _write_manifest("gen", {"spec": spec_path, "seed": seed},
                    [spec_path], [out_path])


@cli.command()
@click.option("--attack", "family", required=True,
              type=click.Choice(list(attacks.FAMILIES)))
@click.option("--window", required=True, help="start:end in seconds")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rate", type=float, default=None,
              help="packets/second (flooding) or mutation probability")
@click.option("--count", type=int, default=None,
              help="number of insertions (injection, prediction)")
@click.option("--source", default=None, help="target connection endpoint")
@click.option("--destination", default=None, help="target connection endpoint")
@click.option("--variable", default=None, help="target variable (value-manipulation)")
@click.option("--value", default=None, help="replacement value, parsed as JSON")
@click.option("--lead", type=float, default=0.0, show_default=True,
              help="seconds the prediction attack fires before the learned slot")
@click.option("--name", default=None, help="scenario name in the sidecar")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True)
@click.option("--scenarios", "scenarios_path", default=None,
              help="scenario sidecar to append this attack's interval to")
def inject(family, window, seed, rate, count, source, destination, variable,
           value, lead, name, in_path, out_path, scenarios_path):
    """Inject one attack into a message stream."""
    if value is not None:
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass  # plain string value
    spec = attacks.AttackSpec(
        family=family, window=_parse_window(window), seed=seed, rate=rate,
        count=count, source=source, destination=destination,
        variable=variable, value=value, lead=lead)
    stream = list(model.read_messages(in_path))
    mutated, summary = attacks.inject(stream, spec)
    model.write_messages(out_path, mutated)

    outputs = [out_path]
    if scenarios_path:
        try:
            existing = _load_json(scenarios_path)
        except FileNotFoundError:
            existing = []
        existing.append(summary.scenario(name))
        with open(scenarios_path, "w", encoding="ascii", newline="\n") as fp:
            json.dump(existing, fp, indent=2)
            fp.write("\n")
        outputs.append(scenarios_path)
    click.echo(json.dumps({"family": family, "mutated": summary.mutated,
                           "labeled": summary.labeled}))
    _write_manifest("inject", {
        "attack": family, "window": window, "seed": seed, "rate": rate,
        "count": count, "source": source, "destination": destination,
        "variable": variable, "lead": lead,
    }, [in_path], outputs)


@cli.command()
@click.option("--detector", "name", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON hyperparameter overrides")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True)
def train(name, config_path, in_path, model_path):
    """Train a detector on a benign stream."""
    config = _load_json(config_path) if config_path else {}
    trained = detect_mod.train(name, _read_stream(in_path), config)
    detect_mod.save_model(trained, model_path)
    click.echo(json.dumps({"detector": name, "summary": trained.summary}))
    _write_manifest("train", {"detector": name, "config": config_path,
                              "in": in_path}, [in_path, config_path or ""],
                    [model_path])


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--alerts", "alerts_path", required=True)
@click.option("--scores", "scores_path", default=None,
              help="sidecar score series (score-emitting detectors only)")
def detect(model_path, in_path, alerts_path, scores_path):
    """Run a trained model over a stream and write its alerts."""
    trained = detect_mod.load_model(model_path)
    scores: list[list[float]] = []
    sink = (lambda t, s: scores.append([t, s])) if scores_path else None
    alerts = list(detect_mod.detect(trained, _read_stream(in_path), score_sink=sink))
    model.write_alerts(alerts_path, alerts)

    by_class: dict[str, int] = {}
    for alert in alerts:
        key = alert.violation_class or "default"
        by_class[key] = by_class.get(key, 0) + 1
    outputs = [alerts_path]
    if scores_path:
        with open(scores_path, "w", encoding="ascii", newline="\n") as fp:
            json.dump({"detector": trained.detector,
                       "threshold": trained.payload.get("threshold"),
                       "scores": scores}, fp)
            fp.write("\n")
        outputs.append(scores_path)
    click.echo(json.dumps({"detector": trained.detector, "alerts": len(alerts),
                           "by_class": by_class}))
    _write_manifest("detect", {"model": model_path, "in": in_path},
                    [model_path, in_path], outputs)


@cli.command(name="eval")
@click.option("--alerts", "alerts_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--scenarios", "scenarios_path", type=click.Path(exists=True),
              help="attack intervals; derived from labels when omitted")
@click.option("--mode", default="both", show_default=True,
              type=click.Choice(["point", "scenario", "both"]))
@click.option("--point-width", type=float, default=None,
              help="alarm width of a point alert [default: one record period]")
@click.option("--grace", type=float, default=0.0, show_default=True,
              help="detection grace window after an attack ends")
@click.option("--detector-name", default=None)
@click.option("--out", "out_path", required=True)
def eval_cmd(alerts_path, truth_path, scenarios_path, mode, point_width, grace,
             detector_name, out_path):
    """Score an alert stream against ground truth."""
    alerts = list(model.read_alerts(alerts_path))
    records = _read_stream(truth_path)
    scenarios = evaluate.load_scenarios(scenarios_path) if scenarios_path else None
    report = evaluate.build_report(
        alerts, records, scenarios=scenarios, mode=mode,
        point_width=point_width, grace=grace, detector=detector_name)
    with open(out_path, "w", encoding="ascii", newline="\n") as fp:
        fp.write(report.to_json())
        fp.write("\n")
    click.echo(json.dumps({
        "detector": report.detector,
        "detected_attacks": report.detected_attacks,
        "false_alarms": report.false_alarms,
        "penalty_score": report.penalty_score,
    }))
    _write_manifest("eval", {
        "alerts": alerts_path, "truth": truth_path, "scenarios": scenarios_path,
        "mode": mode, "point_width": point_width, "grace": grace,
    }, [alerts_path, truth_path, scenarios_path or ""], [out_path])


@cli.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, help="comparison table (CSV)")
@click.option("--timeline", "timeline_path", default=None,
              help="timeline export for external plotting tools")
@click.option("--figure", "figure_path", default=None,
              help="render the timeline to an image file")
def compare(reports, out_path, timeline_path, figure_path):
    """Tabulate reports side by side and export/render their timelines."""
    loaded = []
    for path in reports:
        with open(path, "r", encoding="utf-8") as fp:
            loaded.append(evaluate.EvalReport.from_json(fp.read()))
    table = evaluate.comparison_table(loaded)
    with open(out_path, "w", encoding="ascii", newline="\n") as fp:
        fp.write(table)
    outputs = [out_path]
    timeline = evaluate.timeline_export(loaded)
    if timeline_path:
        with open(timeline_path, "w", encoding="ascii", newline="\n") as fp:
            json.dump(timeline, fp, indent=2, sort_keys=True)
            fp.write("\n")
        outputs.append(timeline_path)
    if figure_path:
        plotting.render_timeline(timeline, figure_path)
        outputs.append(figure_path)
    click.echo(json.dumps({"detectors": [r.detector for r in loaded]}))
    _write_manifest("compare", {"timeline": timeline_path, "figure": figure_path},
                    list(reports), outputs)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return 0 if exc.exit_code == 0 else 1
    except (click.UsageError, click.BadParameter) as exc:
        click.echo(json.dumps({"error": "usage", "message": exc.format_message()}),
                   err=True)
        return 1
    except UsageError as exc:
        click.echo(json.dumps({"error": "usage", "message": str(exc)}), err=True)
        return 1
    except DataError as exc:
        click.echo(json.dumps({"error": "data", "message": str(exc)}), err=True)
        return 2
    except click.ClickException as exc:
        click.echo(json.dumps({"error": "usage", "message": exc.format_message()}),
                   err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit 3
        log.exception("internal error")
        click.echo(json.dumps({"error": "internal", "message": str(exc)}), err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
