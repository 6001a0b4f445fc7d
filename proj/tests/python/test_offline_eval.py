"""Re-implements model loading and inference in numpy and compares against the CLI."""

import csv
import re
import subprocess

import numpy as np
import pytest

ACT = {
    "logsig": lambda z: 1.0 / (1.0 + np.exp(-z)),
    "tansig": np.tanh,
    "purelin": lambda z: z,
}
LOG_COLUMNS = {"L_spp_nm"}


def parse_model(path):
    lines = [l.split() for l in path.read_text().splitlines() if l.strip() and not l.startswith("#")]
    assert lines[0] == ["spp-cascadenet-model", "v1"]
    model = {"layers": {}, "norm": {}}
    i = 1
    while lines[i][0] != "end":
        tok = lines[i]
        if tok[0] == "window":
            model["window"] = (int(tok[1]), int(tok[2]), float(tok[4]))
            model["component"] = int(tok[5]) if len(tok) > 5 else 0
        elif tok[0] == "region":
            assert tok[1] == "1"
            model["region"] = (float(tok[2]), float(tok[3]))
        elif tok[0] == "normalization":
            model["norm"][tok[1]] = (float(tok[2]), float(tok[3]))
        elif tok[0] == "layer":
            out, inp = int(tok[2]), int(tok[3])
            w = np.array([[float(v) for v in lines[i + 1 + r]] for r in range(out)])
            assert w.shape == (out, inp)
            bias = lines[i + 1 + out]
            assert bias[0] == "bias"
            model["layers"][tok[1]] = (w, np.array([float(v) for v in bias[1:]]), ACT[tok[4]])
            i += out + 1
        i += 1
    return model


def forward(model, name, x):
    w, b, act = model["layers"][name]
    return act(w @ x + b)


def normalize(model, column, raw):
    lo, hi = model["norm"][column]
    v = np.log10(raw) if column in LOG_COLUMNS else raw
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def inverse(model, column, v):
    lo, hi = model["norm"][column]
    out = lo + 0.5 * (v + 1.0) * (hi - lo)
    return 10.0 ** out if column in LOG_COLUMNS else out


def offline_eval(model, rows):
    lo, hi, min_sigma = model["window"]
    theta_M, theta_m = model["region"]
    c = model["component"]
    line, capacity = [], 0
    preds, flags, sq = [], [], 0.0
    for r in rows:
        x = np.array([normalize(model, "lambda0_nm", r["lambda0_nm"]), normalize(model, "t_nm", r["t_nm"])])
        lam = normalize(model, "lambda_spp_nm", r["lambda_spp_nm"])
        length = normalize(model, "L_spp_nm", r["L_spp_nm"])

        p = forward(model, "II", x)
        ya = forward(model, "IVa", forward(model, "IIIa", x))
        delta_tau = lo + int(np.floor(p[1] * (hi - lo) + 0.5))
        sigma = min(max(min_sigma + (1.0 - min_sigma) * p[2], min_sigma), 1.0)

        capacity = max(capacity, delta_tau)
        line.append((ya[c], 0.5 + 0.4 * lam))
        line = line[-capacity:]
        accepted = False
        if len(line) >= delta_tau:
            seg = np.array(line[-delta_tau:])
            n = np.arange(delta_tau)
            half = 0.5 * (delta_tau - 1)
            win = np.exp(-0.5 * ((n - half) / (sigma * half)) ** 2)
            mag = np.abs(np.fft.fft(win * (seg[:, 1] - seg[:, 0])))
            accepted = mag.max() <= theta_M and mag.min() <= theta_m

        ea = np.max(np.abs(0.5 + 0.4 * lam - ya))
        eb = 0.0
        yb = np.zeros(5)
        if accepted:
            yb = forward(model, "IVb", forward(model, "IIIb", np.concatenate([x, ya])))
            eb = np.max(np.abs(0.8 * length - yb))
        y = forward(model, "VI", np.concatenate([ya, yb]))
        sq += max(ea, eb) ** 2
        preds.append((inverse(model, "lambda_spp_nm", y[0]),
                      inverse(model, "L_spp_nm", y[1]) if accepted else np.nan))
        flags.append(0 if accepted else 1)
    return np.array(preds), np.array(flags), sq / len(rows)


def read_csv(path):
    with open(path) as f:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(l for l in f if not l.startswith("#"))]


def run(cli, cwd, *args):
    res = subprocess.run([cli, *args], cwd=cwd, capture_output=True, text=True, check=True)
    return dict(re.findall(r"(\w+)=(\S+)", res.stdout))


@pytest.mark.parametrize("split,component", [("train", 0), ("test", 0), ("train", 5)])
def test_cli_predictions_match_numpy(cli, tmp_path, split, component):
    run(cli, tmp_path, "gen-data", "--thickness", "36,60,96", "--n-lambda", "30")
    run(cli, tmp_path, "train", "--data", "dataset.csv", "--epochs", "15", "--seed", "4",
        "--validation-component", str(component))
    summary = run(cli, tmp_path, "eval", "--model", "model.txt", "--data", f"{split}.csv")

    model = parse_model(tmp_path / "model.txt")
    rows = read_csv(tmp_path / f"{split}.csv")
    preds, flags, mse = offline_eval(model, rows)

    got = read_csv(tmp_path / "predictions.csv")
    assert len(got) == len(rows) == int(summary["samples"])
    np.testing.assert_array_equal([g["rejected_flag"] for g in got], flags)
    assert int(summary["rejected"]) == flags.sum()
    if split == "train":
        assert flags.sum() < len(flags)
    np.testing.assert_allclose([g["lambda_spp_pred"] for g in got], preds[:, 0], rtol=1e-9)
    np.testing.assert_allclose([g["L_spp_pred"] for g in got], preds[:, 1], rtol=1e-9, equal_nan=True)
    assert float(summary["mse"]) == pytest.approx(mse, rel=1e-9)

    rel = np.abs(preds[:, 0] - [r["lambda_spp_nm"] for r in rows]) / [r["lambda_spp_nm"] for r in rows]
    assert float(summary["max_rel_err_lambda_spp"]) == pytest.approx(rel.max(), rel=1e-9)
    assert float(summary["median_rel_err_lambda_spp"]) == pytest.approx(np.median(rel), rel=1e-9)
