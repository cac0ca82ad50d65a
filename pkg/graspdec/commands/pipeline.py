from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
from loguru import logger

from graspdec.cli.guard import exit_on_error
from graspdec.core.classify import EvaluationConfig, Scheme, evaluate_epochs, table_columns, train_svm
from graspdec.core.config import config
from graspdec.core.csp import fit_csp, log_variance_features
from graspdec.core.epoching import epochs_by_class, extract_epochs
from graspdec.core.errors import ValidationError
from graspdec.core.model import BandName, Phase, band_by_name, errors_only, standard_bands, validate_recording
from graspdec.core.preprocess import apply_filter_bank, broadband_filter, design_notch, preprocess_recording
from graspdec.core.sessions import (
    ACCURACY_FILE,
    EVENTS_FILE,
    META_FILE,
    RECORDING_FILE,
    accuracy_document,
    build_manifest,
    prepare_out_dir,
    read_session,
    write_features,
    write_json,
    write_manifest,
)
from graspdec.core.simulate import label_trials
from graspdec.core.utils import display_table


def parse_bands(text: str | None) -> list:
    if not text:
        return standard_bands()
    try:
        wanted = {BandName.parse(part) for part in text.split(",") if part.strip()}
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--bands")
    if not wanted:
        raise click.BadParameter("no band given", param_hint="--bands")
    return [band for band in standard_bands() if band.name in wanted]


def parse_phases(text: str) -> list[Phase]:
    return list(Phase) if text == "both" else [Phase.parse(text)]


def _check_recording(rec):
    report = validate_recording(rec)
    for warning in (v for v in report if v.severity == "warning"):
        logger.warning(f"{rec.subject_id}: {warning.message}")
    errors = errors_only(report)
    if errors:
        raise ValidationError(f"recording {rec.subject_id} is invalid", violations=[str(v) for v in errors])


@click.command("pipeline")
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--bands", default=None, help="Comma-separated bands (default: delta,theta,alpha,beta,gamma)")
@click.option("--phase", type=click.Choice(["observation", "movement", "both"], case_sensitive=False),
              default="both", show_default=True)
@click.option("--c", "c_parameter", type=float, default=None, help="SVM soft-margin C (default: configured)")
@click.option("--eval-scheme", type=click.Choice([s.value for s in Scheme]), default=None,
              help="holdout or kfold (default: configured)")
@click.option("--test-fraction", type=float, default=None, help="Hold-out test fraction")
@click.option("--k", "k_folds", type=int, default=None, help="Number of folds for kfold")
@click.option("--seed", type=int, default=None, help="Split seed (default: configured seed)")
@click.pass_context
def cmd(ctx, session_dir, out_dir, bands, phase, c_parameter, eval_scheme, test_fraction, k_folds, seed):
    """
    Decode grip type from one session: notch, broadband, filter bank, epochs,
    per (band, phase) CSP + SVM evaluation. Writes accuracy.json, models,
    features and a manifest.
    """
    selected_bands = parse_bands(bands)
    phases = parse_phases(phase.lower())

    with exit_on_error(ctx):
        seed = ctx.obj["seed"] if seed is None else seed
        threads = ctx.obj["threads"]
        evaluation = EvaluationConfig(
            scheme=eval_scheme or config.eval_scheme,
            test_fraction=config.test_fraction if test_fraction is None else test_fraction,
            k=config.k_folds if k_folds is None else k_folds,
            stratified=config.stratified,
            seed=seed,
            c_parameter=config.c_parameter if c_parameter is None else c_parameter,
        )

        rec, events = read_session(session_dir)
        _check_recording(rec)
        labels = label_trials(events)
        logger.info(f"Session {rec.subject_id}: {rec.n_samples} samples, {len(labels)} trials")

        fs = rec.sample_rate_hz
        cleaned = preprocess_recording(
            rec,
            notch_hz=config.notch_hz,
            quality=config.notch_quality,
            low_hz=config.broadband_low_hz,
            high_hz=config.broadband_high_hz,
            order=config.filter_order,
        )
        bank = apply_filter_bank(cleaned.samples, selected_bands, fs, config.filter_order, threads)

        work = table_columns(phases, [b.name for b in selected_bands])

        def run(column):
            work_phase, band_name = column
            band = band_by_name(band_name)
            extraction = extract_epochs(bank[band_name], events, work_phase, fs, band)
            epochs = extraction.epochs
            result = evaluate_epochs(epochs, evaluation)
            csp_model = fit_csp(*epochs_by_class(epochs))
            features = [log_variance_features(csp_model, e) for e in epochs]
            svm = train_svm(features, [e.grasp_class for e in epochs], evaluation.c_parameter)
            return result, csp_model, features, svm

        if threads > 1 and len(work) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(run, work))
        else:
            outcomes = [run(column) for column in work]

        out_dir = prepare_out_dir(out_dir)
        models_dir = prepare_out_dir(out_dir / "models")
        features_dir = prepare_out_dir(out_dir / "features")
        written = []
        results = {}
        for (work_phase, band_name), (result, csp_model, features, svm) in zip(work, outcomes):
            stem = f"{band_name.value.lower()}_{work_phase.value.lower()}"
            results[(work_phase, band_name)] = result
            written.append(write_json(models_dir / f"csp_{stem}.json", csp_model.to_dict()))
            written.append(write_json(models_dir / f"svm_{stem}.json", svm.to_dict()))
            written.append(write_features(features_dir / f"{stem}.csv", features))

        written.append(
            write_json(out_dir / ACCURACY_FILE, accuracy_document(rec.subject_id, results, evaluation.to_dict()))
        )

        configuration = {
            "bands": [b.to_dict() for b in selected_bands],
            "phases": [p.value for p in phases],
            "filters": {
                "notch": design_notch(config.notch_hz, fs, config.notch_quality).to_dict(),
                "broadband": broadband_filter(
                    fs, config.broadband_low_hz, config.broadband_high_hz, config.filter_order
                ).to_dict(),
                "bank": {name.value: iir.to_dict() for name, iir in bank.filters.items()},
            },
            "evaluation": evaluation.to_dict(),
        }
        inputs = [session_dir / name for name in (RECORDING_FILE, META_FILE, EVENTS_FILE)]
        write_manifest(out_dir, build_manifest("pipeline", seed, configuration, inputs, written, base_dir=out_dir))

        logger.info(f"Wrote {len(written)} files to {out_dir}")
        display_table(
            [
                {"phase": p.value, "band": b.value, "accuracy": f"{r.accuracy:.1f}", "n_test": r.n_test}
                for (p, b), r in results.items()
            ],
            ["phase", "band", "accuracy", "n_test"],
        )
