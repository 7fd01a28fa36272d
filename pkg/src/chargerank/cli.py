"""Command-line pipeline: synth, extract, train, evaluate, rank, bootstrap,
radius-sweep.

Every flag maps one-to-one onto a RunConfig key; a config file supplies the
rest, and every command writes its fully resolved config next to its
outputs so the run can be reproduced byte-for-byte from that file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from chargerank import evaluation, features as features_mod, ingest, models
from chargerank.config import ConfigError, RunConfig
from chargerank.geo import BufferSpec
from chargerank.ingest import IngestError
from chargerank.layers import ManifestError, load_scenario_layers

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCHEMA = 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, doc) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(doc), f, indent=1, sort_keys=True)
        f.write("\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with RunConfig keys")
    for name, f in RunConfig.__dataclass_fields__.items():
        flag = "--" + name.replace("_", "-")
        if f.type in ("int", int):
            parser.add_argument(flag, dest=name, type=int)
        elif f.type in ("float", float):
            parser.add_argument(flag, dest=name, type=float)
        elif f.type in ("dict", dict, "list", list) or name in ("rf_grid", "gbrt_grid",
                                                                "radius_set_m"):
            parser.add_argument(flag, dest=name, type=json.loads,
                                help="JSON literal")
        else:
            parser.add_argument(flag, dest=name)


def _resolve_config(args) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else {}
    for name in RunConfig.__dataclass_fields__:
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    return RunConfig.from_dict(base)


def _outdir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "resolved_config.json")
    return out


def _load_xy(config: RunConfig):
    out = Path(config.output_dir)
    feats = pd.read_csv(out / "features.csv")
    pools = pd.read_csv(out / "pools.csv")
    if "label" not in pools.columns:
        raise IngestError("pools.csv: missing required column 'label'")
    fm = features_mod.FeatureMatrix.from_dataframe(feats)
    pool_order = {pid: i for i, pid in enumerate(pools["pool_id"].astype(str))}
    idx = [pool_order[pid] for pid in fm.ids]
    y = pools["label"].to_numpy()[idx].astype(np.float64)
    return fm, y, pools


def cmd_synth(args) -> int:
    from chargerank.synth import ScenarioSpec, generate_scenario

    config = _resolve_config(args)
    spec = ScenarioSpec(
        seed=config.master_seed if args.scenario_seed is None else args.scenario_seed,
        n_pools=args.n_pools,
        noise_scale=args.noise_scale,
        n_planted=args.n_planted,
        box_km=args.box_km,
        top_fraction=config.top_fraction,
        buffer_radius_m=config.buffer_radius_m,
    )
    truth = generate_scenario(spec, config.scenario_dir)
    print(f"scenario written to {config.scenario_dir}: "
          f"{len(truth['pool_ids'])} pools, oracle AUC {truth['oracle_auc']:.4f}")
    return EXIT_OK


def cmd_extract(args) -> int:
    config = _resolve_config(args)
    labeling = config.labeling_spec()
    projection, layers = load_scenario_layers(config.path("manifest"))
    stations = ingest.load_stations(config.path("stations"), projection)
    raw_txs = ingest.load_transactions(config.path("transactions"))
    txs, drops = ingest.filter_transactions(raw_txs, labeling)
    pools = ingest.aggregate_pools(stations)
    ingest.attach_indicators(pools, txs, labeling, config.use_time_basis)
    values = [getattr(p.indicators, config.response_indicator) for p in pools]
    labels = ingest.label_top(values, [p.pool_id for p in pools], config.top_fraction)

    fm_raw, extraction_report = features_mod.extract_features(
        pools, layers, BufferSpec(config.buffer_radius_m, config.buffer_segments))
    fm, prep_report = features_mod.preprocess(
        fm_raw,
        max_missing=config.max_missing_fraction,
        max_zero_fraction=config.max_zero_fraction,
        corr_threshold=config.correlation_threshold,
        corr_mode=config.correlation_mode)

    out = _outdir(config)
    ingest.pools_dataframe(pools, labels).to_csv(out / "pools.csv", index=False)
    fm.to_dataframe().to_csv(out / "features.csv", index=False)
    _write_json(out / "feature_report.json", {
        "extraction": extraction_report,
        "preprocess": prep_report,
        "transaction_drops": drops,
        "n_transactions_kept": len(txs),
    })
    print(f"extracted {fm.X.shape[1]} predictors for {fm.X.shape[0]} pools "
          f"-> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _resolve_config(args)
    fm, y, _pools = _load_xy(config)
    out = _outdir(config)
    method = config.method if config.method != "all" else "lr_l1"
    model, detail = evaluation.train_method(
        method, fm.X, y, config.master_seed, (0,), k=config.k_folds,
        tree_grids=config.tree_grids(), cv_obj_tol=config.cv_obj_tol,
        cv_max_sweeps=config.cv_max_sweeps, feature_names=fm.names)
    models.save_model(out / "model.json", model)
    _write_json(out / "train_report.json", {"method": method, **detail})
    print(f"trained {method} -> {out / 'model.json'} ({detail})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _resolve_config(args)
    fm, y, _pools = _load_xy(config)
    out = _outdir(config)
    methods = ["lr_l1", "rf", "gbrt"] if config.method == "all" else [config.method]
    grid = evaluation.theta_grid()
    report: dict = {"theta_grid": grid, "methods": {}}
    roc_rows = []
    auc_rows = []
    results = {}
    for method in methods:
        res = evaluation.ensemble_experiment(
            fm.X, y, method=method, n_splits=config.n_splits,
            test_fraction=config.test_fraction, k=config.k_folds,
            master_seed=config.master_seed, tree_grids=config.tree_grids(),
            cv_obj_tol=config.cv_obj_tol, cv_max_sweeps=config.cv_max_sweeps,
            n_jobs=config.jobs)
        results[method] = res
        report["methods"][method] = {
            "mean_curves": res.mean_curves,
            "std_curves": res.std_curves,
            "auc_mean": float(res.aucs.mean()),
            "auc_std": float(res.aucs.std(ddof=1)),
            "theta_mcc_max": res.theta_mcc_max,
            "theta_f_max": res.theta_f_max,
            "metrics_at_theta_mcc_max": res.metrics_at(res.theta_mcc_max),
            "metrics_at_theta_f_max": res.metrics_at(res.theta_f_max),
        }
        for split, pts in enumerate(res.roc_points):
            for fo, se in pts:
                roc_rows.append({"method": method, "split": split,
                                 "fall_out": fo, "sensitivity": se})
        for split, auc in enumerate(res.aucs):
            auc_rows.append({"method": method, "split": split, "auc": auc})
    prevalence = float(np.mean(y))
    null_curves = [evaluation.null_expectations(t, prevalence).as_dict() for t in grid]
    report["null_model"] = {
        "prevalence": prevalence,
        "curves_derived": {name: [c[name] for c in null_curves]
                           for name in evaluation.METRIC_NAMES},
        # the printed table swaps these two rows; both readings reported
        "as_printed_labels": {"precision": [1.0 - t for t in grid],
                              "sensitivity": [prevalence] * len(grid)},
    }
    if len(methods) > 1:
        comparisons = {}
        for i, a in enumerate(methods):
            for b in methods[i + 1:]:
                comparisons[f"{a}_vs_{b}"] = evaluation.compare_auc(
                    results[a].aucs, results[b].aucs)
        report["comparisons"] = comparisons
    _write_json(out / "eval_report.json", report)
    pd.DataFrame(roc_rows).to_csv(out / "roc_points.csv", index=False)
    pd.DataFrame(auc_rows).to_csv(out / "auc_ensembles.csv", index=False)
    for method in methods:
        m = report["methods"][method]
        print(f"{method}: AUC {m['auc_mean']:.4f} +- {m['auc_std']:.4f}, "
              f"theta_MCCmax {m['theta_mcc_max']:.2f}, "
              f"theta_Fmax {m['theta_f_max']:.2f}")
    return EXIT_OK


def cmd_rank(args) -> int:
    config = _resolve_config(args)
    out = _outdir(config)
    model = models.load_model(out / "model.json")
    feats = pd.read_csv(out / "features.csv")
    fm = features_mod.FeatureMatrix.from_dataframe(feats)
    scores = model.predict_proba(fm.X)
    pred = models.classify(scores, config.rank_theta)
    df = pd.DataFrame({"pool_id": fm.ids, "score": scores, "predicted": pred})
    df = df.sort_values(["score", "pool_id"], ascending=[False, True],
                        kind="stable").reset_index(drop=True)
    df.to_csv(out / "ranked.csv", index=False)
    print(f"ranked {len(df)} pools at theta={config.rank_theta} "
          f"-> {out / 'ranked.csv'} ({int(pred.sum())} predicted popular)")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    config = _resolve_config(args)
    fm, y, _pools = _load_xy(config)
    out = _outdir(config)
    res = evaluation.bootstrap_coefficients(
        fm.X, y, B=config.n_bootstrap, k=config.k_folds,
        master_seed=config.master_seed,
        standardize_mode=config.bootstrap_standardize,
        selection_threshold=config.selection_threshold,
        feature_names=fm.names, cv_obj_tol=config.cv_obj_tol,
        cv_max_sweeps=config.cv_max_sweeps, n_jobs=config.jobs)
    res.table().to_csv(out / "coefficients.csv", index=False)
    _write_json(out / "bootstrap_report.json", {
        "n_bootstrap": config.n_bootstrap,
        "standardize_mode": res.standardize_mode,
        "n_selected": int(res.selected_mask.sum()),
        "selected": [n for n, s in zip(res.feature_names, res.selected_mask) if s],
    })
    print(f"bootstrap B={config.n_bootstrap}: {int(res.selected_mask.sum())} "
          f"predictors selected in >=90% of refits -> {out / 'coefficients.csv'}")
    return EXIT_OK


def cmd_radius_sweep(args) -> int:
    config = _resolve_config(args)
    labeling = config.labeling_spec()
    projection, layers = load_scenario_layers(config.path("manifest"))
    stations = ingest.load_stations(config.path("stations"), projection)
    txs, _drops = ingest.filter_transactions(
        ingest.load_transactions(config.path("transactions")), labeling)
    pools = ingest.aggregate_pools(stations)
    ingest.attach_indicators(pools, txs, labeling, config.use_time_basis)
    response = np.array([getattr(p.indicators, config.response_indicator)
                         for p in pools], dtype=np.float64)
    out = _outdir(config)
    rows = []
    for radius in config.radius_set_m:
        fm_raw, _rep = features_mod.extract_features(
            pools, layers, BufferSpec(radius, config.buffer_segments),
            run_imputation=(radius == config.radius_set_m[0]))
        fm, _prep = features_mod.preprocess(
            fm_raw, max_missing=config.max_missing_fraction,
            max_zero_fraction=config.max_zero_fraction,
            corr_threshold=config.correlation_threshold,
            corr_mode=config.correlation_mode)
        r2 = models.ols_r2(fm.X, response)
        rows.append({"radius_m": radius, "r2": r2, "n_predictors": fm.X.shape[1]})
    best = max(range(len(rows)), key=lambda i: rows[i]["r2"])
    for i, row in enumerate(rows):
        row["selected"] = i == best
    df = pd.DataFrame(rows)
    df.to_csv(out / "radius_sweep.csv", index=False)
    for row in rows:
        marker = " <- selected" if row["selected"] else ""
        print(f"radius {row['radius_m']:6.1f} m: R^2 = {row['r2']:.4f}{marker}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chargerank",
        description="Predict and rank charging-pool popularity from GIS context")
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "synth": (cmd_synth, "generate a synthetic scenario with planted truth"),
        "extract": (cmd_extract, "ingest a scenario and build features.csv"),
        "train": (cmd_train, "train one model with internal CV"),
        "evaluate": (cmd_evaluate, "run the multi-split threshold-swept evaluation"),
        "rank": (cmd_rank, "score pools with a saved model and rank them"),
        "bootstrap": (cmd_bootstrap, "bootstrap coefficient stability analysis"),
        "radius-sweep": (cmd_radius_sweep, "pick the buffer radius by OLS R^2"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        if name == "synth":
            p.add_argument("--n-pools", type=int, default=1200)
            p.add_argument("--noise-scale", type=float, default=2.5)
            p.add_argument("--n-planted", type=int, default=10)
            p.add_argument("--box-km", type=float, default=12.0)
            p.add_argument("--scenario-seed", type=int, default=None)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (IngestError, ManifestError, ConfigError, features_mod.FeatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
