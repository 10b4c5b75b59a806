import math

import pytest

import tsdiff


def small_config():
    return {
        "hidden_size": "6",
        "attention_layers": "1",
        "noise_hidden": "8",
        "step_embedding": "4",
        "diffusion_steps": "20",
        "solver_step": "0.5",
        "batch_size": "3",
        "seed": "7",
    }


def test_oracle_is_deterministic():
    a = tsdiff.gen_oracle("homogeneous", 5, seed=3, rate=2.0, horizon=5.0)
    b = tsdiff.gen_oracle("homogeneous", 5, seed=3, rate=2.0, horizon=5.0)
    assert a == b
    assert len(a) == 5
    assert a.dim() == 2


def test_jsonl_round_trip(tmp_path):
    ds = tsdiff.gen_oracle("sinusoidal", 4, seed=1, missing_rate=0.3, horizon=5.0)
    path = tmp_path / "d.jsonl"
    tsdiff.save_jsonl(path, ds)
    back = tsdiff.load_jsonl(path)
    assert len(back) == 4
    assert back.total_events() == ds.total_events()


def test_errors_are_typed(tmp_path):
    with pytest.raises(tsdiff.DataError):
        tsdiff.load_jsonl(tmp_path / "missing.jsonl")
    with pytest.raises(tsdiff.UsageError):
        tsdiff.gen_oracle("nope", 1)
    bad = tsdiff.EventSequence(1.0, [tsdiff.Event(0.5, [1.0]), tsdiff.Event(0.2, [1.0])])
    with pytest.raises(tsdiff.DataError):
        bad.validate()


def test_train_synthesize_evaluate(tmp_path):
    raw = tsdiff.gen_oracle("sinusoidal", 6, seed=2, horizon=5.0, missing_rate=0.2)
    std = tsdiff.standardize(raw)
    model = tsdiff.Model.for_dataset(std, small_config())
    seen = []
    history = model.train(std, epochs=2, on_epoch=lambda e, l: seen.append(e))
    assert seen == [1, 2]
    assert all(math.isfinite(h.total) for h in history)

    ckpt = tmp_path / "m.ckpt"
    model.save(ckpt)
    again = tsdiff.Model.load(ckpt)
    assert again.epoch == 2
    assert again.config == model.config

    synth = again.synthesize(5, seed=4)
    assert len(synth) == 5
    assert synth == model.synthesize(5, seed=4)
    for seq in synth.sequences:
        seq.validate()

    scores = again.scores(raw)
    assert math.isfinite(scores["temporal"]) and math.isfinite(scores["feature"])


def test_metrics():
    ds = tsdiff.gen_oracle("homogeneous", 40, seed=5, dim=2, rho=[0.6, 0.0])
    assert 0.0 <= tsdiff.tfc_score(ds) <= 1.0
    curve = tsdiff.prd(ds, ds, clusters=5)
    assert curve["max_precision"] >= 0.97
    assert len(tsdiff.durations(ds)) <= 40
