import math

import pytest

import txscam


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    n_tx, n_labels = txscam.gen_dataset(str(out), normal=20, scam=15, phishing=5, seed=3)
    assert n_labels == 40
    assert n_tx > 8000
    return out


def test_interval_index():
    assert txscam.interval_index(0, 0, 7) == 0
    assert txscam.interval_index(7 * 86400 - 1, 0, 7) == 0
    assert txscam.interval_index(7 * 86400, 0, 7) == 1


def test_step_weight_reversal():
    lo = txscam.temporal_step_weights([100, 200], "min")
    hi = txscam.temporal_step_weights([100, 200], "max")
    assert lo == pytest.approx([1 / 102, 101 / 102], abs=1e-15)
    assert hi == pytest.approx([101 / 102, 1 / 102], abs=1e-15)


def test_alias_frequencies():
    draws = txscam.alias_sample([1.0, 3.0], 200_000, seed=1)
    assert abs(sum(draws) / len(draws) - 0.75) < 0.005
    with pytest.raises(txscam.Error):
        txscam.alias_sample([], 1)


def test_input_errors_are_value_errors():
    assert issubclass(txscam.InputError, txscam.Error)
    assert issubclass(txscam.InputError, ValueError)


def test_metrics():
    m = txscam.metrics([1, 0, 0, 1], [1, 1, 0, 0])
    assert (m["tp"], m["fp"], m["tn"], m["fn"]) == (1, 1, 1, 1)
    assert m["f1"] == 0.5
    z = txscam.metrics([0, 0], [1, 0])
    assert z["precision"] == 0.0
    assert "precision_undefined" in z["flags"]
    with pytest.raises(ValueError):
        txscam.metrics([1], [1, 0])


def test_degree_stats(corpus):
    s = txscam.degree_stats(str(corpus / "transactions.csv"), str(corpus / "labels.csv"))
    assert s["source_count"] == 40
    assert sum(s["in_degree"]) == s["edge_count"] == sum(s["out_degree"])
    assert s["sd_degree"] > 0
    with pytest.raises(ValueError):
        txscam.degree_stats(str(corpus / "missing.csv"))


def test_strwalk_replays(corpus):
    with open(corpus / "labels.csv") as f:
        account = f.read().splitlines()[1].split(",")[0]
    a = txscam.strwalk(str(corpus / "transactions.csv"), account, window=5, seed=9)
    b = txscam.strwalk(str(corpus / "transactions.csv"), account, window=5, seed=9)
    assert a == b
    assert a["walk"][0] == account
    assert len(a["walk"]) <= 20
    assert all(tau >= 0 for _, tau in a["edges"])


def test_train_and_detect(corpus, tmp_path):
    ckpt = tmp_path / "model.json"
    r = txscam.train(
        str(corpus / "transactions.csv"), str(corpus / "labels.csv"), str(ckpt), epochs=3, seed=2
    )
    assert len(r["train_loss"]) == 3
    assert all(math.isfinite(x) for x in r["train_loss"])
    assert 0.0 <= r["test"]["f1"] <= 1.0
    with open(corpus / "labels.csv") as f:
        accounts = [line.split(",")[0] for line in f.read().splitlines()[1:4]]
    det = txscam.detect(str(corpus / "transactions.csv"), str(ckpt), accounts, seed=2)
    assert [d[0] for d in det] == accounts
    assert all(0.0 <= d[2] <= 1.0 for d in det)
    assert det == txscam.detect(str(corpus / "transactions.csv"), str(ckpt), accounts, seed=2)
