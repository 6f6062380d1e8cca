"""Command-line driver wiring datasets, training, unlearning, federation,
kernels, and audits into reproducible experiments.

Exit codes: 0 success, 1 config validation, 2 invariant violation, 3 I/O.
Every run writes a manifest of consumed seeds and artifact digests.
"""

import dataclasses
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from qmulab import (audit, backend, datasets, fed, geo, learn, pqc, privacy,
                    qcore, qkernel, unlearn)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


DEFAULT_CONFIG = {
    "seed": 0,
    "eps_cert": 0.05,
    "dataset": {"generator": "two_moons", "n": 100, "noise": 0.15, "path": None,
                "forget": {"kind": "subcluster", "size": 15, "label": 1}},
    "template": {"n_qubits": 2, "depth": 2, "entangler": "linear",
                 "reupload": True, "noise": None},
    "train": {"learning_rate": 0.1, "epochs": 150, "batch_size": 16,
              "optimizer": "gd", "damping": 1e-3, "patience": None, "loss": "mse"},
    "mechanism": {"name": "qmu_i"},
    "dp": {"clip_norm": 1.0, "sigma": 1.0, "epsilon": None, "delta": 1e-5},
    "fed": {"clients": 3, "topology": "star", "rounds": 5, "server_lr": 0.2,
            "local_clip": 1.0, "unlearn_events": []},
    "kernel": {"ridge": 0.1, "map_seed": 7, "map_depth": 1},
}


def _merge(base, override):
    out = dict(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, seed_override=None):
    cfg = DEFAULT_CONFIG
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})")
        if not isinstance(user, dict):
            raise ConfigError("config: top level must be an object")
        cfg = _merge(cfg, user)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed: must be an integer")
    ds = cfg["dataset"]
    if ds.get("path") is None and ds.get("generator") not in datasets.GENERATORS:
        raise ConfigError(f"dataset.generator: unknown generator {ds.get('generator')!r}")
    if ds.get("path") is not None and not Path(ds["path"]).exists():
        raise ConfigError(f"dataset.path: file does not exist: {ds['path']}")
    tp = cfg["template"]
    if tp["n_qubits"] < 1 or tp["n_qubits"] > qcore.MAX_QUBITS:
        raise ConfigError("template.n_qubits: out of range")
    if tp["depth"] < 1:
        raise ConfigError("template.depth: must be >= 1")
    if tp["entangler"] not in ("linear", "ring"):
        raise ConfigError("template.entangler: must be 'linear' or 'ring'")
    return cfg


def build_dataset(cfg):
    ds = cfg["dataset"]
    if ds.get("path"):
        data = datasets.load_csv(ds["path"], split_seed=cfg["seed"])
    else:
        data = datasets.generate_dataset(ds["generator"], ds["n"], ds["noise"], cfg["seed"])
    forget = ds.get("forget") or {}
    if not data.forget_mask.any() and forget:
        if forget.get("kind") == "subcluster":
            data = datasets.mark_forget_subcluster(
                data, forget.get("size", 15), forget.get("label", 1))
        elif forget.get("kind") == "class":
            data = datasets.mark_forget_class(data, forget.get("label", 1))
        elif forget.get("kind") not in (None, "none"):
            raise ConfigError(f"dataset.forget.kind: unknown kind {forget.get('kind')!r}")
    return data


def build_template(cfg, n_features):
    tp = cfg["template"]
    t = pqc.build_layered_ansatz(
        tp["n_qubits"], tp["depth"], entangler=tp["entangler"],
        reupload=tp["reupload"], n_features=n_features)
    if tp.get("noise"):
        t = dataclasses.replace(t, noise=tp["noise"])
    return t


def build_train_config(cfg):
    tr = cfg["train"]
    return learn.TrainConfig(
        learning_rate=tr["learning_rate"], epochs=tr["epochs"],
        batch_size=tr["batch_size"], optimizer=tr["optimizer"],
        damping=tr["damping"], patience=tr["patience"], seed=cfg["seed"],
        loss=learn.LossSpec(tr.get("loss", "mse")),
    )


def _repro_block(cfg, data, probes):
    return {
        "master_seed": cfg["seed"],
        "n_qubits": cfg["template"]["n_qubits"],
        "depth": cfg["template"]["depth"],
        "backend": backend.BACKEND_NAME,
        "device": "dense statevector simulator (exact expectations, no shots)",
        "n_samples": len(data.features),
        "probe_digest": audit.probe_digest(probes),
    }


def _write_json(payload, path):
    payload = json.loads(json.dumps(payload, default=audit._jsonify))
    payload["digest"] = audit.report_digest(payload)
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return payload["digest"]


def _write_manifest(out_dir, cfg, artifacts):
    manifest = {
        "master_seed": cfg["seed"],
        "config": cfg,
        "artifacts": artifacts,
    }
    _write_json(manifest, Path(out_dir) / "manifest.json")


def _save_theta(theta, path):
    with open(path, "w") as fh:
        json.dump({"theta": list(map(float, theta.values))}, fh, indent=2)


def run_train(cfg, out_dir, counterfactual=False):
    data = build_dataset(cfg)
    t = build_template(cfg, data.n_features)
    tcfg = build_train_config(cfg)
    model = (learn.retrain_counterfactual if counterfactual else learn.train)(t, data, tcfg)
    probes = audit.probe_set(data)
    report = {
        "experiment": "retrain" if counterfactual else "train",
        "metrics": {
            "train": learn.evaluate(model, data, "train", tcfg.loss),
            "test": learn.evaluate(model, data, "test", tcfg.loss),
        },
        "loss_trace": model.loss_trace,
        "reproducibility": _repro_block(cfg, data, probes),
    }
    out = Path(out_dir)
    datasets.save_csv(data, out / "dataset.csv")
    _save_theta(model.theta, out / "theta.json")
    digest = _write_json(report, out / "report.json")
    _write_manifest(out_dir, cfg, {"report": digest})
    return report


def _mechanism_run(cfg, model, data):
    mech = cfg.get("mechanism") or {}
    name = mech.get("name", "qmu_i")
    # Fine-tuning defaults to the training configuration so the optimization
    # trajectory tracks the counterfactual's; any field can be overridden.
    tr = cfg["train"]
    ft_overrides = mech.get("fine_tune") or {}
    ft = learn.TrainConfig(
        learning_rate=ft_overrides.get("learning_rate", tr["learning_rate"]),
        epochs=ft_overrides.get("epochs", tr["epochs"]),
        batch_size=ft_overrides.get("batch_size", tr["batch_size"]),
        optimizer=ft_overrides.get("optimizer", tr["optimizer"]),
        damping=ft_overrides.get("damping", tr["damping"]),
        patience=ft_overrides.get("patience", tr["patience"]),
        seed=cfg["seed"],
        loss=learn.LossSpec(tr.get("loss", "mse")),
    )
    if name == "qmu_i":
        qcfg = unlearn.QmuIConfig(
            eta=mech.get("eta", 0.1), clip_norm=mech.get("clip_norm", 1.0),
            trust_radius=mech.get("trust_radius", 1.0), damping=mech.get("damping", 1e-3),
            qfim_mode=mech.get("qfim_mode", "diagonal"),
            batch_size=mech.get("batch_size", 8), max_iters=mech.get("max_iters", 25),
            fine_tune=ft,
        )
        return unlearn.qmu_i(model, data, qcfg)
    if name == "influence":
        delta = unlearn.influence_delta(
            model, data, data.forget_indices(), mech.get("damping", 1e-3), loss=ft.loss)
        trace = unlearn.UnlearnTrace(mechanism="influence")
        trace.record(model.theta)
        stepped = learn.replace_theta(
            model, pqc.ParamVector(model.theta.values + delta.values))
        trace.record(stepped.theta)
        tuned = learn.fine_tune(stepped, *data.rows(data.retained_train_indices()), ft)
        trace.record(tuned.theta)
        return tuned, trace
    if name == "fisher":
        theta = unlearn.fisher_step(
            model, data, data.forget_indices(), mech.get("eta", 0.1),
            mech.get("damping", 1e-3), loss=ft.loss)
        trace = unlearn.UnlearnTrace(mechanism="fisher")
        trace.record(model.theta)
        stepped = learn.replace_theta(model, theta)
        trace.record(theta)
        tuned = learn.fine_tune(stepped, *data.rows(data.retained_train_indices()), ft)
        trace.record(tuned.theta)
        return tuned, trace
    if name == "reset_partial":
        xs, _ = data.rows(data.forget_indices())
        F = geo.batch_qfim(model.template, model.theta, xs, mode="diagonal")
        selection = unlearn.fisher_ranked_selection(F, mech.get("fraction", 0.5))
        return unlearn.reset_partial(
            model, data, selection, p0_seed=[cfg["seed"], 303], fine_tune_cfg=ft)
    raise ConfigError(f"mechanism.name: unknown mechanism {name!r}")


def run_unlearn(cfg, out_dir, no_op=False):
    data = build_dataset(cfg)
    if len(data.forget_indices()) == 0:
        raise ConfigError("dataset.forget: unlearn experiment needs a non-empty forget set")
    t = build_template(cfg, data.n_features)
    tcfg = build_train_config(cfg)
    model = learn.train(t, data, tcfg)
    counter = learn.retrain_counterfactual(t, data, tcfg)
    probes = audit.probe_set(data)
    pre_retention = audit.retention_metrics(model, data)
    pre_membership = audit.membership_inference(
        t, model.theta, data, data.forget_indices(),
        data.retained_train_indices(), data.test_indices(), loss=tcfg.loss)
    if no_op:
        after_model = model
        trace = unlearn.UnlearnTrace(mechanism="none")
        trace.record(model.theta)
        mechanism = "none"
    else:
        after_model, trace = _mechanism_run(cfg, model, data)
        mechanism = trace.mechanism
    dist = audit.distance_audit(
        t, model.theta, after_model.theta, counter.theta, probes,
        eps_cert=cfg.get("eps_cert", 0.05))
    curve = audit.forgetting_curve(trace, t, counter.theta, probes)
    post_membership = audit.membership_inference(
        t, after_model.theta, data, data.forget_indices(),
        data.retained_train_indices(), data.test_indices(), loss=tcfg.loss)
    gap = audit.param_gap_bound(
        model, data, data.forget_indices(), cfg.get("mechanism", {}).get("damping", 1e-3),
        loss=tcfg.loss)
    report = audit.UnlearnReport(
        mechanism=mechanism,
        distances=dist,
        membership={"before": pre_membership, "after": post_membership},
        retention=audit.retention_metrics(after_model, data, pre_retention),
        dp_ledger=privacy.PrivacyLedger().to_dict(),
        reproducibility=_repro_block(cfg, data, probes),
        param_gap_bound=gap,
        forgetting_curve=curve.rows(),
        notes={"model_state": "probe-averaged output state over the retained test split"},
    )
    out = Path(out_dir)
    datasets.save_csv(data, out / "dataset.csv")
    _save_theta(after_model.theta, out / "theta.json")
    with open(out / "forgetting_curve.csv", "w") as fh:
        fh.write("iteration,trace_distance\n")
        for it, d in curve.rows():
            fh.write(f"{it},{d:.12g}\n")
    digest = audit.emit_report(report, out / "report.json")
    _write_manifest(out_dir, cfg, {"report": digest})
    return report


def run_fed(cfg, out_dir):
    data = build_dataset(cfg)
    t = build_template(cfg, data.n_features)
    fcfg = cfg["fed"]
    dp = privacy.DPConfig(
        clip_norm=cfg["dp"]["clip_norm"], epsilon=cfg["dp"].get("epsilon"),
        delta=cfg["dp"].get("delta", 1e-5), sigma=cfg["dp"].get("sigma"))
    clients = fed.shard_clients(data, fcfg["clients"], cfg["seed"],
                                clip_norm=fcfg.get("local_clip", 1.0))
    state = fed.FedState(
        template=t, theta=learn.init_params(t.n_params, cfg["seed"]), data=data,
        clients=clients, server_lr=fcfg["server_lr"], topology=fcfg["topology"],
        master_seed=cfg["seed"], loss=learn.LossSpec(cfg["train"].get("loss", "mse")),
    )
    events = {int(e["round"]): e for e in fcfg.get("unlearn_events", [])}
    event_log = []
    for r in range(fcfg["rounds"]):
        fed.fed_round(state, dp)
        if r in events:
            e = events[r]
            _, info = fed.unlearn_client(
                state, int(e["client"]), mode=e.get("mode", "gradient_subtract"),
                fine_tune_cfg=None)
            event_log.append({"round": r, "client": int(e["client"]),
                              "mode": e.get("mode", "gradient_subtract"), "info": info})
    probes = audit.probe_set(data)
    model = learn.TrainedModel(t, state.theta, [], cfg["seed"])
    report = {
        "experiment": "fed",
        "rounds": [
            {"round": rec.round_no, "sigma": rec.sigma, "epsilon": rec.epsilon,
             "masked_digest": rec.masked_digest}
            for rec in state.history
        ],
        "unlearn_events": event_log,
        "dp_ledger": state.ledger.to_dict(),
        "metrics": {"test": learn.evaluate(model, data, "test")},
        "reproducibility": _repro_block(cfg, data, probes),
    }
    out = Path(out_dir)
    with open(out / "ledger.csv", "w") as fh:
        fh.write("round,sigma,epsilon\n")
        for rec in state.history:
            fh.write(f"{rec.round_no},{rec.sigma:.12g},{rec.epsilon:.12g}\n")
    _save_theta(state.theta, out / "theta.json")
    digest = _write_json(report, out / "report.json")
    _write_manifest(out_dir, cfg, {"report": digest})
    return report


def run_kernel(cfg, out_dir):
    data = build_dataset(cfg)
    kcfg = cfg["kernel"]
    t = pqc.build_layered_ansatz(
        cfg["template"]["n_qubits"], kcfg.get("map_depth", 1),
        entangler=cfg["template"]["entangler"], reupload=True,
        n_features=data.n_features)
    theta_fixed = qkernel.fixed_feature_map(t, kcfg.get("map_seed", 7))
    train_idx = data.train_indices()
    xs, ys = data.rows(train_idx)
    K = qkernel.gram(t, theta_fixed, xs)
    model = qkernel.krr_fit(K, ys.astype(float), kcfg.get("ridge", 0.1), t, theta_fixed)
    # Forget-set positions within the train shard.
    forget_pos = [i for i, gi in enumerate(train_idx) if data.forget_mask[gi]]
    deleted = qkernel.delete_samples_smw(model, forget_pos)
    keep_pos = [i for i in range(len(train_idx)) if i not in set(forget_pos)]
    direct = qkernel.krr_fit(
        qkernel.GramMatrix(K.matrix[np.ix_(keep_pos, keep_pos)], xs[keep_pos]),
        ys[keep_pos].astype(float), kcfg.get("ridge", 0.1), t, theta_fixed)
    test_x, test_y = data.rows(data.test_indices())
    preds = np.array([qkernel.krr_predict(deleted, x) for x in test_x])
    bounds = [qkernel.deviation_bound(model, forget_pos, x) for x in test_x]
    K_after = qkernel.GramMatrix(K.matrix[np.ix_(keep_pos, keep_pos)], xs[keep_pos])
    report = {
        "experiment": "kernel",
        "ridge": kcfg.get("ridge", 0.1),
        "smw_vs_retrain_max_err": float(np.max(np.abs(deleted.alpha - direct.alpha))) if forget_pos else 0.0,
        "test_accuracy_after_delete": float(np.mean(np.where(preds >= 0, 1, -1) == test_y)),
        "max_deviation_bound": float(max(bounds)) if bounds else 0.0,
        "alignment_kept_block": qkernel.alignment(K_after, K_after),
        "mmd_forget_vs_retained": (
            qkernel.mmd(K, forget_pos, keep_pos) if forget_pos else 0.0),
        "reproducibility": _repro_block(cfg, data, audit.probe_set(data)),
    }
    out = Path(out_dir)
    qkernel.export_gram_csv(K, out / "gram.csv")
    digest = _write_json(report, out / "report.json")
    _write_manifest(out_dir, cfg, {"report": digest})
    return report


def run_bench(cfg, out_dir):
    import timeit

    data = build_dataset(cfg)
    t = build_template(cfg, data.n_features)
    theta = learn.init_params(t.n_params, cfg["seed"])
    x = data.features[0]
    batch = data.rows(data.train_indices()[:4])
    loss = learn.LossSpec("mse")
    rows = []

    def timed(label, fn, number=3):
        rows.append({"op": label, "seconds": timeit.timeit(fn, number=number) / number})

    timed("parameter_shift_gradient[batch=4]",
          lambda: geo.parameter_shift_gradient(t, theta, batch, loss))
    timed("qfim_full", lambda: geo.qfim(t, theta, x, mode="full"))
    timed("qfim_diagonal", lambda: geo.qfim(t, theta, x, mode="diagonal"))
    rng = np.random.default_rng(cfg["seed"])
    feats = rng.uniform(-np.pi, np.pi, size=(30, t.n_features))
    theta_fixed = qkernel.fixed_feature_map(t.without_noise(), 7)
    K = qkernel.gram(t.without_noise(), theta_fixed, feats)
    km = qkernel.krr_fit(K, rng.choice([-1.0, 1.0], size=30), 0.1, t.without_noise(), theta_fixed)
    timed("smw_delete[3 of 30]", lambda: qkernel.delete_samples_smw(km, [1, 5, 9]), number=20)
    # Backend comparison on the hot gate kernel.
    n = 8
    vec = np.zeros(2**n, dtype=np.complex128)
    vec[0] = 1.0
    gate = pqc.rotation_matrix("RY", 0.3)
    timed("apply_1q_gate[8q,python]",
          lambda: backend.apply_matrix_py(vec, gate, (3,), n), number=200)
    if backend.HAVE_COMPILED:
        timed("apply_1q_gate[8q,compiled]",
              lambda: backend.apply_matrix_compiled(vec, gate, (3,), n), number=200)
        timed("apply_2q_gate[8q,python]",
              lambda: backend.apply_matrix_py(vec, pqc.CNOT_MAT, (3, 4), n), number=200)
        timed("apply_2q_gate[8q,compiled]",
              lambda: backend.apply_matrix_compiled(vec, pqc.CNOT_MAT, (3, 4), n), number=200)
    report = {"experiment": "bench", "backend": backend.BACKEND_NAME, "timings": rows,
              "reproducibility": {"master_seed": cfg["seed"]}}
    out = Path(out_dir)
    with open(out / "bench.csv", "w") as fh:
        fh.write("op,seconds\n")
        for r in rows:
            fh.write(f"{r['op']},{r['seconds']:.6g}\n")
    digest = _write_json(report, out / "report.json")
    _write_manifest(out_dir, cfg, {"report": digest})
    return report


def run_gen_data(cfg, out_dir):
    data = build_dataset(cfg)
    path = Path(out_dir) / "dataset.csv"
    datasets.save_csv(data, path)
    return {"experiment": "gen-data", "path": str(path), "n": len(data.features)}


EXPERIMENTS = {
    "gen-data": run_gen_data,
    "train": lambda cfg, out: run_train(cfg, out, counterfactual=False),
    "retrain": lambda cfg, out: run_train(cfg, out, counterfactual=True),
    "unlearn": lambda cfg, out: run_unlearn(cfg, out),
    "audit": lambda cfg, out: run_unlearn(cfg, out, no_op=True),
    "fed": run_fed,
    "kernel": run_kernel,
    "bench": run_bench,
}


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON run configuration.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), default="runs",
              help="Output directory for reports and artifacts.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Desk-scale quantum machine unlearning experiments."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out_dir=out_dir)


def _run(ctx, kind):
    try:
        cfg = load_config(ctx.obj["config_path"], ctx.obj["seed"])
        out = Path(ctx.obj["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        EXPERIMENTS[kind](cfg, out)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(3)
    except ValueError as exc:
        click.echo(f"invariant violation: {exc}", err=True)
        sys.exit(2)
    click.echo(f"{kind}: ok ({out})")


for _kind in EXPERIMENTS:
    def _make(kind):
        @click.pass_context
        def cmd(ctx):
            _run(ctx, kind)
        cmd.__name__ = kind.replace("-", "_")
        return cmd
    main.command(name=_kind)(_make(_kind))


if __name__ == "__main__":
    main()
