"""Command line front door: datasets, training, evaluation, and runs.

Configuration is a single YAML file layered over desk-scale defaults
(--paper-scale swaps in the full-size preset first).  Every subcommand
is deterministic given (config, seed) and drops a manifest JSON next to
its outputs so each CSV can be traced back to the exact configuration
that produced it.

Exit codes: 0 success, 1 configuration error, 2 numeric failure,
3 threshold failure in --check mode.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np
import yaml

from . import __version__, authfp, classifier, frontend, mac, net, waveform

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_CHECK = 3

OUT_ENV = "DEEPWIFI_OUT"
ARTIFACT_VERSION = f"deepwifi-{__version__}/csv-v{net.SCHEMA_VERSION}"

DESK_DEFAULTS = {
    "data": {
        "n_frames": 1200,
        "frame_len": 2048,
        "snr_lo_db": 5.0,
        "snr_hi_db": 30.0,
        "jam_to_signal_db": 0.0,
        "seed": 0,
    },
    "train": {
        "dae_epochs": 60,
        "fnn_epochs": 150,
        "seed": 0,
    },
    "auth": {
        "n_authorized": 6,
        "n_outliers": 4,
        "n_train": 60,
        "n_test": 40,
        "snr_grid_db": [15.0, 20.0, 25.0],
        "pooled_margin": 2.0,
        "user_margin": 3.0,
        "seed": 0,
    },
    "mcs": {
        "payloads": [256, 512, 1024],
        "trials": 200,
        "seed": 0,
    },
    "sim": {
        "n_users": 9,
        "n_channels": 40,
        "n_flows": 5,
        "n_slots": 200,
        "policy": "deepwifi",
        "jammer_kind": "random",
        "p_j": 0.0,
        "post_jam_sinr_db": 30.0,
        "traffic_scale": 1.0,
        "min_sep_m": 10.0,
        "mode": "truth",
        "seed": 0,
    },
    "sweep": {
        "kind": "pj",
        "p_j_start": 0.0,
        "p_j_stop": 1.0,
        "p_j_step": 0.05,
        "sinr_start_db": 0.0,
        "sinr_stop_db": 30.0,
        "sinr_step_db": 1.0,
        "fixed_p_j": 0.7,
        "seeds": [0, 1, 2, 3, 4],
        "policies": ["deepwifi", "baseline"],
        "jobs": 1,
    },
}

PAPER_PRESET = {
    "data": {"n_frames": 12000},
    "sim": {"n_slots": 1000},
    "auth": {"n_train": 100, "n_test": 100},
}


class ConfigError(Exception):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in out:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, paper_scale=False):
    cfg = copy.deepcopy(DESK_DEFAULTS)
    if paper_scale:
        cfg = _merge(cfg, PAPER_PRESET)
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, user)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(outdir, name, cfg, seeds, outputs):
    manifest = {
        "command": name,
        "config_hash": config_hash(cfg),
        "seeds": list(seeds),
        "artifact_version": ARTIFACT_VERSION,
        "outputs": [os.path.basename(p) for p in sorted(outputs)],
    }
    path = os.path.join(outdir, f"{name}_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _say(msg):
    print(msg, flush=True)


# -- subcommands ------------------------------------------------------------

def cmd_gen_data(cfg, outdir):
    d = cfg["data"]
    dataset = waveform.make_dataset(waveform.DatasetConfig(
        n_frames=int(d["n_frames"]),
        frame_len=int(d["frame_len"]),
        snr_range_db=(float(d["snr_lo_db"]), float(d["snr_hi_db"])),
        jam_to_signal_db=float(d["jam_to_signal_db"]),
        seed=int(d["seed"]),
    ))
    path = os.path.join(outdir, "dataset.bin")
    waveform.save_dataset(dataset, path)
    counts = {}
    for frame in dataset.frames:
        counts[frame.label] = counts.get(frame.label, 0) + 1
    _say(f"gen-data: {len(dataset.frames)} frames {counts} -> {path}")
    write_manifest(outdir, "gen_data", cfg, [d["seed"]], [path])
    return EXIT_OK


def _metrics_rows(history, prefix):
    keys = [k for k in history if k != "epoch"]
    rows = []
    for i, epoch in enumerate(history["epoch"]):
        for key in keys:
            rows.append(f"{prefix},{epoch},{key},{history[key][i]!r}")
    return rows


def cmd_train(cfg, outdir):
    data_path = os.path.join(outdir, "dataset.bin")
    if not os.path.exists(data_path):
        raise ConfigError(f"dataset missing: {data_path} (run gen-data)")
    dataset = waveform.load_dataset(data_path)
    train_frames = dataset.subset("train")
    test_frames = dataset.subset("test")
    t = cfg["train"]

    dae_cfg = frontend.DaeConfig(epochs=int(t["dae_epochs"]),
                                 seed=int(t["seed"]))
    dae, dae_hist = frontend.train_dae(train_frames, test_frames, dae_cfg)
    if dae_hist["train_loss"][-1] >= dae_hist["train_loss"][0]:
        _say("train: autoencoder loss failed to improve")
        return EXIT_NUMERIC
    rel = frontend.relative_mse(dae, test_frames)
    _say(f"train: autoencoder held-out relative mse {rel:.4f}")

    x_train = frontend.frames_matrix(train_frames,
                                     input_scale=dae.input_scale,
                                     full_scale=dae.full_scale)
    x_test = frontend.frames_matrix(test_frames,
                                    input_scale=dae.input_scale,
                                    full_scale=dae.full_scale)
    z_train = frontend.encode(dae, x_train)
    z_test = frontend.encode(dae, x_test)
    y_train = [f.label for f in train_frames]
    y_test = [f.label for f in test_frames]
    fnn_cfg = classifier.FnnConfig(epochs=int(t["fnn_epochs"]),
                                   seed=int(t["seed"]))
    fnn, fnn_hist = classifier.train_fnn(z_train, y_train, z_test, y_test,
                                         fnn_cfg)
    if fnn_hist["train_loss"][-1] >= fnn_hist["train_loss"][0]:
        _say("train: classifier loss failed to improve")
        return EXIT_NUMERIC

    pred = classifier.predict(fnn, z_test)
    acc = float(np.mean([p == y for p, y in zip(pred, y_test)]))
    conf = classifier.confusion_matrix(y_test, pred)
    _say(f"train: classifier test accuracy {acc:.4f}")

    dae_path = os.path.join(outdir, "dae.npz")
    fnn_path = os.path.join(outdir, "fnn.npz")
    dae.save(dae_path)
    fnn.save(fnn_path)

    metrics_path = os.path.join(outdir, "train_metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write(net.CSV_STAMP + " train_metrics\n")
        fh.write("model,epoch,metric,value\n")
        for row in _metrics_rows(dae_hist, "dae"):
            fh.write(row + "\n")
        for row in _metrics_rows(fnn_hist, "fnn"):
            fh.write(row + "\n")

    conf_path = os.path.join(outdir, "confusion.csv")
    with open(conf_path, "w") as fh:
        fh.write(net.CSV_STAMP + " confusion\n")
        fh.write("true," + ",".join(classifier.LABELS) + "\n")
        for i, label in enumerate(classifier.LABELS):
            fh.write(label + "," + ",".join(
                repr(float(v)) for v in conf[i]) + "\n")

    outputs = [dae_path, fnn_path, metrics_path, conf_path]
    write_manifest(outdir, "train", cfg, [t["seed"]], outputs)
    return EXIT_OK


def cmd_auth_eval(cfg, outdir, check=False):
    a = cfg["auth"]
    seed = int(a["seed"])
    snr_grid = tuple(float(s) for s in a["snr_grid_db"])
    profiles = authfp.authorized_profiles(int(a["n_authorized"]))
    outliers = authfp.outlier_profiles(int(a["n_outliers"]),
                                       int(a["n_authorized"]))
    train = authfp.build_signature_dataset(profiles, int(a["n_train"]),
                                           snr_grid, seed=seed)
    test_auth = authfp.build_signature_dataset(profiles, int(a["n_test"]),
                                               snr_grid, seed=seed + 1)
    test_out = authfp.build_signature_dataset(outliers, int(a["n_test"]),
                                              snr_grid, seed=seed + 2)

    x_train = authfp.signatures_array(train)
    pooled = authfp.mcd_fit(x_train, seed=seed)
    pooled = authfp.calibrate_threshold(pooled, x_train,
                                        margin=float(a["pooled_margin"]))
    users = authfp.fit_user_models(train, margin=float(a["user_margin"]))

    def _claimed(rows):
        # outliers claim whichever authorized identity fits them best
        accept = 0
        for uid, _, sig in rows:
            x = sig.as_array()
            claim = uid if uid in users else authfp.identify(x, users)
            if authfp.authenticate_claim(x, claim, pooled, users) == "A":
                accept += 1
        return accept

    n_a = len(test_auth)
    n_o = len(test_out)
    tp = _claimed(test_auth)
    fa = _claimed(test_out)
    ident_hits = sum(
        authfp.identify(sig.as_array(), users) == uid
        for uid, _, sig in test_auth)
    accept_rate = tp / n_a
    fa_rate = fa / n_o
    overall = (tp + (n_o - fa)) / (n_a + n_o)
    ident = ident_hits / n_a
    _say(f"auth-eval: authorized accept {accept_rate:.4f} false accept "
         f"{fa_rate:.4f} overall {overall:.4f} identification {ident:.4f}")

    path = os.path.join(outdir, "auth_confusion.csv")
    with open(path, "w") as fh:
        fh.write(net.CSV_STAMP + " auth_confusion\n")
        fh.write("true_class,accepted,rejected,identification_accuracy\n")
        fh.write(f"A,{tp},{n_a - tp},{ident!r}\n")
        fh.write(f"O,{fa},{n_o - fa},\n")
    write_manifest(outdir, "auth_eval", cfg, [seed], [path])

    if check and (overall < 0.85 or fa_rate > 0.02):
        _say("auth-eval: below acceptance thresholds")
        return EXIT_CHECK
    return EXIT_OK


def cmd_mcs_table(cfg, outdir):
    m = cfg["mcs"]
    table = mac.derive_thresholds(
        payloads=tuple(int(p) for p in m["payloads"]),
        trials=int(m["trials"]), seed=int(m["seed"]))
    path = os.path.join(outdir, "thresholds.csv")
    mac.save_thresholds(table, path)
    for payload in sorted(table):
        edges = [table[payload][m_] for m_ in sorted(table[payload])]
        _say(f"mcs-table: payload {payload}: {edges}")
    write_manifest(outdir, "mcs_table", cfg, [m["seed"]], [path])
    return EXIT_OK


def _scenario(sim, **overrides):
    fields = dict(sim)
    fields.update(overrides)
    return net.ScenarioConfig(**{k: v for k, v in fields.items()})


def _load_models(outdir, mode):
    dae = fnn = confusion = None
    if mode == "classifier":
        dae_path = os.path.join(outdir, "dae.npz")
        fnn_path = os.path.join(outdir, "fnn.npz")
        if not (os.path.exists(dae_path) and os.path.exists(fnn_path)):
            raise ConfigError("classifier mode needs dae.npz and fnn.npz "
                              "(run train)")
        dae = frontend.DaeModel.load(dae_path)
        fnn = classifier.FnnModel.load(fnn_path)
    elif mode == "confusion":
        conf_path = os.path.join(outdir, "confusion.csv")
        if not os.path.exists(conf_path):
            raise ConfigError("confusion mode needs confusion.csv "
                              "(run train)")
        rows = []
        with open(conf_path) as fh:
            fh.readline()
            fh.readline()
            for line in fh:
                rows.append([float(v) for v in line.split(",")[1:]])
        confusion = np.asarray(rows)
        confusion = confusion / confusion.sum(axis=1, keepdims=True)
    return dae, fnn, confusion


def _thresholds(outdir):
    path = os.path.join(outdir, "thresholds.csv")
    if not os.path.exists(path):
        raise ConfigError(f"threshold table missing: {path} (run mcs-table)")
    return mac.load_thresholds(path)


def cmd_simulate(cfg, outdir):
    sim = cfg["sim"]
    thresholds = _thresholds(outdir)
    dae, fnn, confusion = _load_models(outdir, sim["mode"])
    try:
        scenario = _scenario(sim)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    result = net.run(scenario, thresholds, dae=dae, fnn=fnn,
                     confusion=confusion)
    paths = net.save_run(result, outdir, stem="run")
    s = result.summary
    _say(f"simulate: {s['policy']} {s['jammer_kind']} p_j={s['p_j']} "
         f"-> {s['cumulative_mbps']:.3f} Mb/s "
         f"(covert {s['covert_rate']:.2f}, collisions "
         f"{s['collision_rate']:.2f})")
    write_manifest(outdir, "simulate", cfg, [sim["seed"]],
                   list(paths.values()))
    return EXIT_OK


def _sweep_points(sw):
    if sw["kind"] == "pj":
        grid = np.arange(float(sw["p_j_start"]),
                         float(sw["p_j_stop"]) + 1e-9, float(sw["p_j_step"]))
        return [("p_j", round(float(v), 6)) for v in grid]
    if sw["kind"] == "sinr":
        grid = np.arange(float(sw["sinr_start_db"]),
                         float(sw["sinr_stop_db"]) + 1e-9,
                         float(sw["sinr_step_db"]))
        return [("post_jam_sinr_db", round(float(v), 6)) for v in grid]
    raise ConfigError(f"unknown sweep kind {sw['kind']!r}")


def _one_run(args):
    scenario, thresholds, dae, fnn, confusion = args
    result = net.run(scenario, thresholds, dae=dae, fnn=fnn,
                     confusion=confusion)
    return net.summary_line(result.summary)


def cmd_sweep(cfg, outdir):
    sim, sw = cfg["sim"], cfg["sweep"]
    thresholds = _thresholds(outdir)
    dae, fnn, confusion = _load_models(outdir, sim["mode"])
    points = _sweep_points(sw)

    tasks = []
    for field, value in points:
        for seed in sw["seeds"]:
            for policy in sw["policies"]:
                overrides = {field: value, "seed": int(seed),
                             "policy": policy}
                if sw["kind"] == "sinr":
                    overrides["p_j"] = float(sw["fixed_p_j"])
                tasks.append(_scenario(sim, **overrides))

    jobs = int(sw["jobs"])
    payload = [(t, thresholds, dae, fnn, confusion) for t in tasks]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lines = list(pool.map(_one_run, payload))
    else:
        lines = [_one_run(p) for p in payload]

    name = "sweep" if sw["kind"] == "pj" else "sinr_sweep"
    path = os.path.join(outdir, f"{name}.csv")
    with open(path, "w") as fh:
        fh.write(net.CSV_STAMP + f" {name}\n")
        fh.write(net.SUMMARY_HEADER + "\n")
        for line in lines:
            fh.write(line + "\n")
    _say(f"sweep: {len(lines)} runs "
         f"({len(points)} points x {len(sw['seeds'])} seeds x "
         f"{len(sw['policies'])} policies) -> {path}")
    write_manifest(outdir, name, cfg, sw["seeds"], [path])
    return EXIT_OK


# -- report -----------------------------------------------------------------

def _read_csv(path):
    import pandas as pd
    with open(path) as fh:
        stamp = fh.readline()
    if not stamp.startswith("# deepwifi-csv"):
        raise ConfigError(f"{path} lacks a schema stamp")
    return pd.read_csv(path, skiprows=1)


def cmd_report(outdir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = []

    def _save(fig, name):
        path = os.path.join(outdir, name)
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        made.append(path)

    sweep_path = os.path.join(outdir, "sweep.csv")
    if os.path.exists(sweep_path):
        df = _read_csv(sweep_path)
        fig, ax = plt.subplots(figsize=(6, 4))
        for policy, group in df.groupby("policy"):
            mean = group.groupby("p_j")["cumulative_mbps"].mean()
            ax.plot(mean.index, mean.values, marker="o", label=policy)
        ax.set_xlabel("jamming probability")
        ax.set_ylabel("throughput (Mb/s)")
        ax.legend()
        fig.tight_layout()
        _save(fig, "throughput_vs_pj.png")

    sinr_path = os.path.join(outdir, "sinr_sweep.csv")
    if os.path.exists(sinr_path):
        df = _read_csv(sinr_path)
        fig, ax = plt.subplots(figsize=(6, 4))
        for policy, group in df.groupby("policy"):
            mean = group.groupby("post_jam_sinr_db")["cumulative_mbps"].mean()
            ax.plot(mean.index, mean.values, label=policy)
        ax.set_xlabel("post-jam SINR (dB)")
        ax.set_ylabel("throughput (Mb/s)")
        ax.legend()
        fig.tight_layout()
        _save(fig, "throughput_vs_sinr.png")

    users_path = os.path.join(outdir, "run_users.csv")
    if os.path.exists(users_path):
        df = _read_csv(users_path)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(df["user"], df["avg_mbps"])
        ax.set_xlabel("user")
        ax.set_ylabel("delivered (Mb/s)")
        fig.tight_layout()
        _save(fig, "per_user_throughput.png")

    power_path = os.path.join(outdir, "run_power.csv")
    if os.path.exists(power_path):
        df = _read_csv(power_path)
        if len(df):
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.hist(df["power_w"], bins=40)
            ax.set_xlabel("transmit power (W)")
            ax.set_ylabel("count")
            fig.tight_layout()
            _save(fig, "power_histogram.png")

    metrics_path = os.path.join(outdir, "train_metrics.csv")
    if os.path.exists(metrics_path):
        df = _read_csv(metrics_path)
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, model in zip(axes, ("dae", "fnn")):
            sub = df[df["model"] == model]
            for metric, group in sub.groupby("metric"):
                ax.plot(group["epoch"], group["value"], label=metric)
            ax.set_title(model)
            ax.set_xlabel("epoch")
            ax.legend()
        fig.tight_layout()
        _save(fig, "training_curves.png")

    if not made:
        raise ConfigError(f"nothing to report in {outdir}")
    _say("report: " + ", ".join(os.path.basename(p) for p in made))
    return EXIT_OK


# -- argument plumbing -------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="deepwifi",
        description="WiFi protocol-stack simulator with learned sensing")
    parser.add_argument("--config", help="YAML config layered over defaults")
    parser.add_argument("--paper-scale", action="store_true",
                        help="use full-size preset instead of desk scale")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default ${OUT_ENV} "
                             "or ./deepwifi_out)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", help="generate the labeled frame dataset")
    sub.add_parser("train", help="train the autoencoder and classifier")
    auth = sub.add_parser("auth-eval", help="evaluate fingerprint gating")
    auth.add_argument("--check", action="store_true",
                      help="exit 3 when below acceptance thresholds")
    sub.add_parser("mcs-table", help="derive the SINR threshold table")
    sub.add_parser("simulate", help="run one network scenario")
    sub.add_parser("sweep", help="sweep p_j or post-jam SINR")
    sub.add_parser("report", help="render figures from output CSVs")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    outdir = args.out or os.environ.get(OUT_ENV) or "deepwifi_out"
    try:
        cfg = load_config(args.config, paper_scale=args.paper_scale)
        os.makedirs(outdir, exist_ok=True)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, outdir)
        if args.command == "train":
            return cmd_train(cfg, outdir)
        if args.command == "auth-eval":
            return cmd_auth_eval(cfg, outdir, check=args.check)
        if args.command == "mcs-table":
            return cmd_mcs_table(cfg, outdir)
        if args.command == "simulate":
            return cmd_simulate(cfg, outdir)
        if args.command == "sweep":
            return cmd_sweep(cfg, outdir)
        if args.command == "report":
            return cmd_report(outdir)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG
    except FloatingPointError as exc:
        _say(f"numeric failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
