"""End-to-end acceptance checks, one test per criterion.

Every test records a PASS/FAIL line (printed in the pytest summary) with the
measured value next to its threshold.  Run with ``pytest tests/test_acceptance.py``.
"""

import hashlib
import time

import numpy as np
import pytest
from scipy.special import erfc

from modrec import dataset
from modrec.baselines import CLASSIFIERS, make_blobs, make_classifier
from modrec.channel import ChannelParams, apply_channel, input_margin
from modrec.cli import main
from modrec.dataset import DatasetFormatError, GenerationConfig, SplitSpec, build_dataset, split
from modrec.evaluate import confusion
from modrec.expertfeat import Standardizer, featurize_dataset
from modrec.iqcore import SeedSpec, gaussian_iq_noise, mean_power, to_iq_rows
from modrec.modem import (BITS_PER_SYMBOL, CLASS_NAMES, LINEAR_CLASSES, ModClass, ModemConfig,
                          bits_to_labels, constellation, generate_signal, map_symbols,
                          modulate_analog, modulate_fsk, pulse_shape, rrc_taps, synth_source)
from modrec.neuralnet.layers import Dense, conv2d_backward, conv2d_forward
from modrec.neuralnet.model import Model, build_model
from modrec.neuralnet.train import TrainConfig, grad_check, predict, train
from nn_reference import conv2d_backward_naive, conv2d_naive, random_conv_case
from test_model_train import generic_point, linear_spec, toy_data, toy_spec

CFG = ModemConfig()


# 1 ---------------------------------------------------------------------------

def test_c01_dsp_suite(acceptance):
    t0 = time.perf_counter()
    h = rrc_taps(CFG.rrc_beta, CFG.sps, CFG.rrc_span)
    rc = np.convolve(h, h)
    c = rc.size // 2
    isi = np.max(np.abs(np.delete(rc[c % CFG.sps::CFG.sps], c // CFG.sps))) / rc[c]

    g = np.random.default_rng(0)
    spread = max(
        np.ptp(np.abs(modulate_fsk("GFSK_BFSK", g.integers(0, 2, 500)))),
        np.ptp(np.abs(modulate_fsk("CPFSK", g.integers(0, 2, 500)))),
        np.ptp(np.abs(modulate_analog("WBFM", synth_source("audio_like", 4000, 1)))),
        *(np.ptp(np.abs(generate_signal(k, 1024, CFG, seed=3)))
          for k in ("GFSK_BFSK", "CPFSK", "WBFM")))

    n = 8192
    f0 = 0.05
    ssb = modulate_analog("AM_SSB", np.cos(2 * np.pi * f0 * np.arange(n)))[CFG.hilbert_taps:]
    spec = np.abs(np.fft.fft(ssb * np.hanning(ssb.size), 16384))
    f = np.fft.fftfreq(16384)
    rej = 20 * np.log10(spec[np.abs(f - f0) < 0.002].max() / spec[np.abs(f + f0) < 0.002].max())

    errors = 0
    for cls in LINEAR_CLASSES:
        k = BITS_PER_SYMBOL[cls]
        bits = g.integers(0, 2, 1000 * k)
        sym = map_symbols(cls, bits)
        rx = np.convolve(pulse_shape(sym, CFG), h)[CFG.rrc_span * CFG.sps::CFG.sps][:sym.size]
        lab = np.argmin(np.abs(rx[:, None] - constellation(cls)[None]), axis=1)
        errors += int(np.sum(lab != bits_to_labels(bits, k)))
    dt = time.perf_counter() - t0
    ok = isi < 1e-3 and spread < 1e-6 and rej >= 30 and errors == 0 and dt < 30
    acceptance(1, "DSP correctness", ok,
               f"ISI {isi:.2e} (<1e-3), envelope spread {spread:.1e} (<1e-6), "
               f"SSB image rejection {rej:.1f} dB (>=30), loopback symbol errors {errors} (0), "
               f"{dt:.1f} s (<30)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c02_snr_calibration(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    parts = []
    for snr in (-20, 0, 20):
        p = ChannelParams(snr_db=snr)
        ps = pn = 0.0
        for i in range(1000):
            x = generate_signal(i % 11, 128 + input_margin(128, p), CFG, seed=SeedSpec(50, i))
            y, noise = apply_channel(x, p, SeedSpec(51 + snr + 20, i), n_out=128, return_noise=True)
            ps += mean_power(y - noise)
            pn += mean_power(noise)
        err = 10 * np.log10(ps / pn) - snr
        worst = max(worst, abs(err))
        parts.append(f"{snr:+d} dB -> {err:+.3f}")
    dt = time.perf_counter() - t0
    ok = worst <= 0.5 and dt < 60
    acceptance(2, "SNR calibration", ok,
               f"bookkept minus label over 1000 frames: {', '.join(parts)} dB "
               f"(|err| <= 0.5), {dt:.1f} s (<60)")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_c03_qpsk_ber_oracle(acceptance):
    # 1.25e-2 is the Gray-QPSK bit error rate at Eb/N0 = 4 dB (Es/N0 = 7 dB)
    ebn0 = 10 ** 0.4
    esn0 = 2 * ebn0
    theory = 0.5 * erfc(np.sqrt(ebn0))
    g = np.random.default_rng(7)
    bits = g.integers(0, 2, 10**5)
    sym = map_symbols("QPSK", bits)
    x = pulse_shape(sym, CFG)
    # unit-energy RRC: per-sample noise variance equals N0 after the matched filter
    y = x + gaussian_iq_noise(x.size, 1.0 / esn0, SeedSpec(7, 1))
    h = rrc_taps(CFG.rrc_beta, CFG.sps, CFG.rrc_span)
    rx = np.convolve(y, h)[CFG.rrc_span * CFG.sps::CFG.sps][:sym.size]
    lab = np.argmin(np.abs(rx[:, None] - constellation("QPSK")[None]), axis=1)
    rbits = ((lab[:, None] >> np.array([1, 0])) & 1).reshape(-1)
    ber = float(np.mean(rbits != bits))
    ok = abs(ber / theory - 1) <= 0.25
    acceptance(3, "QPSK BER oracle", ok,
               f"BER {ber:.4e} vs Q-function {theory:.4e} at Eb/N0 4 dB, "
               f"ratio {ber / theory:.3f} (within 0.75..1.25), 1e5 bits")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c04_gradient_checks(acceptance, monkeypatch):
    t0 = time.perf_counter()
    x, y = toy_data()
    full = grad_check(generic_point(Model(toy_spec(), seed=1)), x, y)
    pen = grad_check(generic_point(Model(toy_spec(l2=0.5, l1=0.5, dropout=0.0), seed=2)),
                     *toy_data(seed=2))
    xl, yl = toy_data(n=8, shape=(5,))
    lin = grad_check(Model(linear_spec(), seed=3), xl, yl)
    orig = Dense.backward

    def flipped(self, g):
        gx = orig(self, g)
        self.grads["W"] = -self.grads["W"]
        return gx

    monkeypatch.setattr(Dense, "backward", flipped)
    mutant = grad_check(generic_point(Model(toy_spec(), seed=1)), x, y)
    dt = time.perf_counter() - t0
    ok = full < 1e-4 and pen < 1e-4 and lin < 1e-7 and mutant > 1e-1 and dt < 60
    acceptance(4, "gradient checks", ok,
               f"all layer kinds {full:.1e}, penalty-dominated {pen:.1e} (<1e-4), "
               f"linear {lin:.1e} (<1e-7), sign-flip mutant {mutant:.2f} (>0.1), {dt:.1f} s (<60)")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c05_conv_oracle(acceptance):
    t0 = time.perf_counter()
    g = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        x, w, b, go = random_conv_case(g)
        worst = max(worst, np.max(np.abs(conv2d_forward(x, w, b) - conv2d_naive(x, w, b))))
        for a, r in zip(conv2d_backward(x, w, go), conv2d_backward_naive(x, w, go)):
            worst = max(worst, np.max(np.abs(a - r)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 60
    acceptance(5, "conv oracle", ok, f"max abs deviation {worst:.1e} over 100 shapes (<=1e-12), "
                                     f"{dt:.1f} s (<60)")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_c08_classical_baselines(acceptance):
    X, y = make_blobs(seed=0)
    Xt, yt = make_blobs(seed=1)
    blob = {k: float(np.mean(make_classifier(k).fit(X, y).predict(Xt) == yt)) for k in CLASSIFIERS}

    ds = build_dataset(GenerationConfig(classes=("BPSK", "QPSK", "QAM16", "WBFM"), snrs=(18,),
                                        signals_per_cell=40, windows_per_signal=5, seed=8))
    tr, _, te = split(ds, SplitSpec(0.6, 0.2, 0.2, seed=8))
    std = Standardizer()
    Xtr, ytr = featurize_dataset(tr, std, fit=True)
    Xte, yte = featurize_dataset(te, std)
    mod = {k: float(np.mean(make_classifier(k).fit(Xtr, ytr).predict(Xte) == yte))
           for k in CLASSIFIERS}
    ok = min(blob.values()) >= 0.95 and min(mod.values()) >= 0.60
    fmt = lambda d: ", ".join(f"{k} {v:.3f}" for k, v in d.items())
    acceptance(8, "classical baselines", ok,
               f"blobs [{fmt(blob)}] (>=0.95); +18 dB BPSK/QPSK/QAM16/WBFM [{fmt(mod)}] (>=0.60)")
    assert ok


# 9 ---------------------------------------------------------------------------

DET_CFG = """\
classes = BPSK,QAM16,CPFSK,AM_SSB
snrs = -4,8
signals_per_cell = 5
windows_per_signal = 4
max_epochs = 2
batch_size = 32
"""


def test_c09_determinism(acceptance, tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(DET_CFG)
    hashes, hists = [], []
    for run in ("a", "b"):
        out = tmp_path / run / "ds.rmd"
        assert main(["generate", "--config", str(cfg), "--out", str(out), "--seed", "11"]) == 0
        hashes.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert main(["train", "--config", str(cfg), "--in", str(out), "--model", "cnn",
                     "--out", str(tmp_path / run / "train")]) == 0
        hists.append((tmp_path / run / "train" / "history.csv").read_bytes())
    ok = hashes[0] == hashes[1] and hists[0] == hists[1]
    acceptance(9, "determinism", ok,
               f"generate sha256 {hashes[0][:12]}.. vs {hashes[1][:12]}.., "
               f"train history CSV identical: {hists[0] == hists[1]}")
    assert ok


# 10 --------------------------------------------------------------------------

def _mutate(blob, g):
    b = bytearray(blob)
    kind = int(g.integers(0, 5))
    if kind == 0:     # flip one bit
        i = int(g.integers(0, len(b)))
        b[i] ^= 1 << int(g.integers(0, 8))
    elif kind == 1:   # overwrite a run with random bytes
        i = int(g.integers(0, len(b)))
        k = int(g.integers(1, 16))
        b[i:i + k] = g.integers(0, 256, min(k, len(b) - i), dtype=np.uint8).tobytes()
    elif kind == 2:   # truncate
        del b[int(g.integers(0, len(b))):]
    elif kind == 3:   # insert bytes
        i = int(g.integers(0, len(b) + 1))
        b[i:i] = g.integers(0, 256, int(g.integers(1, 9)), dtype=np.uint8).tobytes()
    else:             # damage the header specifically
        i = int(g.integers(0, dataset.HEADER.size))
        b[i] = (b[i] + int(g.integers(1, 256))) % 256
    return bytes(b)


def test_c10_format_fuzz(acceptance, tmp_path):
    ds = build_dataset(GenerationConfig(classes=("BPSK", "WBFM"), snrs=(0,), signals_per_cell=2,
                                        windows_per_signal=2, seed=1))
    blob = dataset.to_bytes(ds)
    g = np.random.default_rng(10)
    structured = misread = crashed = 0
    for _ in range(1000):
        bad = _mutate(blob, g)
        if bad == blob:
            continue
        try:
            back = dataset.from_bytes(bad)
        except DatasetFormatError:
            structured += 1
            continue
        except Exception:     # anything else is a crash for this criterion
            crashed += 1
            continue
        if not back.equals(ds):
            misread += 1
    ok = crashed == 0 and misread == 0 and structured > 0
    acceptance(10, "format robustness", ok,
               f"1000 mutations: {structured} structured errors, {crashed} other exceptions (0), "
               f"{misread} silent misreads (0)")
    assert ok


# 6 ---------------------------------------------------------------------------

PSK8, QPSK, WBFM, AM_DSB = (CLASS_NAMES.index(c) for c in ("PSK8", "QPSK", "WBFM", "AM_DSB"))


def _cnn_run(ds, spec, train_seed, budget, batch_size=128, max_epochs=400):
    tr, va, te = split(ds, spec)
    m = build_model("cnn", seed=train_seed, dtype=np.float32)
    cfg = TrainConfig(batch_size=batch_size, max_epochs=max_epochs, seed=train_seed,
                      time_budget=budget)
    m, hist = train(m, to_iq_rows(tr.iq), tr.labels, to_iq_rows(va.iq), va.labels, cfg)
    pred = predict(m, to_iq_rows(te.iq)).argmax(axis=1)
    return tr, te, pred, hist


@pytest.mark.slow
def test_c06_cnn_high_snr(acceptance):
    limit = 15 * 60
    t0 = time.perf_counter()
    ds = build_dataset(GenerationConfig(snrs=(10, 12, 14, 16, 18), signals_per_cell=75,
                                        windows_per_signal=2, seed=6))
    # leave a minute for the final epoch, restoring the best weights and scoring
    budget = limit - 60 - (time.perf_counter() - t0)
    _, te, pred, hist = _cnn_run(ds, SplitSpec(0.6, 0.2, 0.2, seed=6), 6, budget)
    dt = time.perf_counter() - t0
    acc = float(np.mean(pred == te.labels))
    top2 = confusion(pred, te.labels, te.snrs, snr_filter=18).off_diagonal_ranking()[:2]
    allowed = {(PSK8, QPSK), (WBFM, AM_DSB)}
    cells_ok = len(top2) == 2 and all((t, p) in allowed for _, t, p in top2)
    ok = acc >= 0.80 and dt <= limit and cells_ok
    named = ", ".join(f"{CLASS_NAMES[t]}->{CLASS_NAMES[p]} ({c})" for c, t, p in top2)
    acceptance(6, "CNN at +10..+18 dB", ok,
               f"test accuracy {acc:.3f} (>=0.80) on {len(te)} frames, {dt:.0f} s (<=900), "
               f"{len(hist)} epochs; +18 dB top off-diagonal cells {named} "
               f"(must be among PSK8->QPSK, WBFM->AM_DSB)")
    assert ok


# 7 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_c07_cnn_vs_tree_low_snr(acceptance):
    rows, wins = [], 0
    for seed in (1, 2, 3):
        # the higher levels give the network something learnable; only -6 and 0 are scored
        ds = build_dataset(GenerationConfig(snrs=(-6, 0, 6, 12, 18), signals_per_cell=25,
                                            windows_per_signal=10, seed=70 + seed))
        spec = SplitSpec(0.5, 0.1, 0.4, seed=seed)
        tr, te, pred, _ = _cnn_run(ds, spec, seed, budget=400)
        std = Standardizer()
        Xtr, ytr = featurize_dataset(tr, std, fit=True)
        Xte, _ = featurize_dataset(te, std)
        tree_pred = make_classifier("tree").fit(Xtr, ytr).predict(Xte)
        won = True
        for snr in (-6, 0):
            m = te.snrs == snr
            cnn_acc = float(np.mean(pred[m] == te.labels[m]))
            tree_acc = float(np.mean(tree_pred[m] == te.labels[m]))
            won &= bool(m.sum() >= 1000 and cnn_acc >= tree_acc)
            rows.append(f"seed {seed} {snr:+d} dB n={int(m.sum())} cnn {cnn_acc:.3f} tree {tree_acc:.3f}")
        wins += won
    ok = wins == 3
    acceptance(7, "CNN vs tree at -6/0 dB", ok, f"{wins}/3 seeds (need 3/3): " + "; ".join(rows))
    assert ok
