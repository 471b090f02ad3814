"""Training determinism, rule-application equivalence, early stopping,
and checkpoint round-trips."""

import dataclasses
import struct

import numpy as np
import pytest

import rulefeat.pipeline
from rulefeat import (
    Dataset,
    Instance,
    TrainConfig,
    TrainedModel,
    load_builtin_ruleset,
    load_model,
    parse_rules,
    predict,
    save_model,
    tokenize,
    train,
)
from rulefeat.errors import CorruptCheckpoint, IncompatibleCheckpoint, NonFiniteLoss
from rulefeat.network import init_params
from rulefeat.pipeline import CHECKPOINT_MAGIC
from rulefeat.rules import EMPTY_RULESET, compile_ruleset

SMALL = TrainConfig(
    epochs=3, batch_size=4, embed_dim=6, filter_widths=(2, 3), feature_maps=3,
    dropout=0.5, seed=11, dev_fraction=0.25,
)

SENTENCES = [
    ("terrible pacing but a lovely payoff", 1),
    ("gorgeous visuals but utterly hollow", 0),
    ("warm , funny and generous", 1),
    ("flat , stale and joyless", 0),
    ("the leads spark real delight", 1),
    ("an exercise in tedium", 0),
    ("clever writing carries every scene", 1),
    ("the premise collapses instantly", 0),
    ("slow start but a knockout finish", 1),
    ("promising setup but squandered badly", 0),
    ("bright , brisk and winning", 1),
    ("a chore from start to end", 0),
]


def make_dataset(rows=SENTENCES, name="train"):
    return Dataset(
        name=name,
        instances=tuple(
            Instance(id=i, tokens=tokenize(t), label=y) for i, (t, y) in enumerate(rows)
        ),
    )


def params_equal(a, b):
    return all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.tensors(), b.tensors()))


class TestTraining:
    def test_same_seed_same_model(self):
        ds = make_dataset()
        rules = load_builtin_ruleset()
        m1 = train(SMALL, ds, ruleset=rules)
        m2 = train(SMALL, ds, ruleset=rules)
        assert params_equal(m1.params, m2.params)
        assert m1.log == m2.log
        l1, p1 = predict(m1, ds)
        l2, p2 = predict(m2, ds)
        np.testing.assert_array_equal(l1, l2)
        np.testing.assert_array_equal(p1, p2)

    def test_different_seed_different_model(self):
        ds = make_dataset()
        m1 = train(SMALL, ds)
        m2 = train(dataclasses.replace(SMALL, seed=12), ds)
        assert not params_equal(m1.params, m2.params)

    def test_per_batch_rules_equal_preprocessed_corpus(self):
        """Applying rules inside each training batch and applying them once
        up front must produce bit-identical models."""
        rules = load_builtin_ruleset()
        chain = compile_ruleset(rules)
        raw_train = make_dataset()
        raw_dev = make_dataset(
            [("fine acting but no story", 0), ("shaky but ultimately moving", 1),
             ("simply wonderful", 1), ("simply dire", 0)],
            name="dev",
        )
        def star(ds):
            return Dataset(
                name=ds.name + "*",
                instances=tuple(
                    Instance(id=t.id, tokens=t.tokens, label=t.label)
                    for t in chain.apply_batch(ds)
                ),
            )

        on_the_fly = train(SMALL, raw_train, dev_set=raw_dev, ruleset=rules)
        preprocessed = train(SMALL, star(raw_train), dev_set=star(raw_dev), ruleset=EMPTY_RULESET)
        assert params_equal(on_the_fly.params, preprocessed.params)
        assert [s.dev_accuracy for s in on_the_fly.log] == [s.dev_accuracy for s in preprocessed.log]
        probe = star(make_dataset(name="probe"))
        np.testing.assert_array_equal(predict(on_the_fly, probe)[1], predict(preprocessed, probe)[1])

    def test_empty_ruleset_matches_rules_that_never_fire(self):
        ds = make_dataset([(t, y) for t, y in SENTENCES if "but" not in t.split()])
        quiet = parse_rules('rule r: on token "however" keep after;')
        a = train(SMALL, ds, ruleset=EMPTY_RULESET)
        b = train(SMALL, ds, ruleset=quiet)
        assert params_equal(a.params, b.params)

    def test_returned_params_hit_best_logged_dev_accuracy(self):
        ds = make_dataset()
        dev = make_dataset(
            [("a but b style treat", 1), ("nothing works here", 0),
             ("but endings matter", 1), ("weak and wobbly", 0)],
            name="dev",
        )
        cfg = dataclasses.replace(SMALL, epochs=6)
        model = train(cfg, ds, dev_set=dev, ruleset=load_builtin_ruleset())
        logged = [s.dev_accuracy for s in model.log]
        assert model.best_epoch is not None
        assert model.log[model.best_epoch].dev_accuracy == max(logged)
        # earliest epoch wins ties
        assert model.best_epoch == logged.index(max(logged))
        preds, _ = predict(model, dev)
        gold = np.array([i.label for i in dev])
        assert float(np.mean(preds == gold)) == max(logged)

    def test_early_stopping_counts_stale_epochs(self):
        """A run cut short by patience=2 stops exactly two epochs after
        its last improvement."""
        ds = make_dataset()
        dev = make_dataset([("blah blah", 0), ("good good", 1)], name="dev")
        cfg = dataclasses.replace(SMALL, epochs=40, patience=2)
        model = train(cfg, ds, dev_set=dev)
        if len(model.log) < 40:
            assert model.best_epoch == len(model.log) - 3

    def test_empty_dev_disables_early_stopping(self):
        ds = make_dataset()
        cfg = dataclasses.replace(SMALL, epochs=4, dev_fraction=0.0)
        model = train(cfg, ds, dev_set=Dataset(name="dev", instances=()))
        assert len(model.log) == 4
        assert all(s.dev_accuracy is None for s in model.log)
        assert model.best_epoch is None

    def test_dev_fraction_zero_without_dev_set(self):
        ds = make_dataset()
        cfg = dataclasses.replace(SMALL, dev_fraction=0.0)
        model = train(cfg, ds)
        assert all(s.dev_accuracy is None for s in model.log)

    def test_carved_dev_reduces_training_data_deterministically(self):
        ds = make_dataset()
        m1 = train(SMALL, ds)
        m2 = train(SMALL, ds)
        assert params_equal(m1.params, m2.params)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train(SMALL, Dataset(name="empty", instances=()))

    def test_nonfinite_loss_carries_batch_diagnostics(self, monkeypatch):
        ds = make_dataset()

        def poisoned(params, batch, labels, dropout=0.0, seed=0, mode="train"):
            return float("nan"), params.zeros_like()

        monkeypatch.setattr(rulefeat.pipeline, "backward", poisoned)
        with pytest.raises(NonFiniteLoss) as err:
            train(dataclasses.replace(SMALL, dev_fraction=0.0), ds)
        assert err.value.epoch == 0
        assert err.value.step == 0
        assert len(err.value.instance_ids) > 0

    def test_pretrained_embedding_dim_wins(self, tmp_path):
        vec = tmp_path / "vecs.txt"
        words = sorted({w for t, _ in SENTENCES for w in t.split()})
        lines = [f"{len(words)} 4"]
        for j, w in enumerate(words):
            lines.append(w + " " + " ".join(f"{0.01 * (j + k):.4f}" for k in range(4)))
        vec.write_text("\n".join(lines) + "\n", encoding="utf-8")
        cfg = dataclasses.replace(SMALL, embed_dim=6, embeddings_path=str(vec))
        model = train(cfg, make_dataset())
        assert model.config.embed_dim == 4
        assert model.params.embed_dim == 4


class TestPredict:
    def test_tie_probabilities_predict_class_zero(self):
        ds = make_dataset()
        cfg = dataclasses.replace(SMALL, epochs=1, dev_fraction=0.0)
        model = train(cfg, ds)
        zeroed = model.params.zeros_like()
        tied = TrainedModel(
            params=zeroed, vocab=model.vocab, ruleset=model.ruleset,
            config=model.config, log=model.log, best_epoch=None,
        )
        labels, probs = predict(tied, ds)
        np.testing.assert_array_equal(probs, np.full((ds.size, 2), 0.5))
        np.testing.assert_array_equal(labels, np.zeros(ds.size, dtype=np.int64))

    def test_inference_rules_toggle_changes_rule_sentences_only(self):
        ds = make_dataset()
        rules = load_builtin_ruleset()
        # no dev set, so the toggle cannot influence the training trajectory
        cfg_on = dataclasses.replace(SMALL, dev_fraction=0.0, apply_rules_at_inference=True)
        cfg_off = dataclasses.replace(SMALL, dev_fraction=0.0, apply_rules_at_inference=False)
        m_on = train(cfg_on, ds, ruleset=rules)
        m_off = train(cfg_off, ds, ruleset=rules)
        assert params_equal(m_on.params, m_off.params)
        plain = make_dataset([("utterly charming stuff", 1)], name="p")
        np.testing.assert_array_equal(predict(m_on, plain)[1], predict(m_off, plain)[1])


class TestCheckpoint:
    def trained(self):
        return train(SMALL, make_dataset(), ruleset=load_builtin_ruleset())

    def test_round_trip_predicts_identically(self, tmp_path):
        model = self.trained()
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config == model.config
        assert loaded.vocab.tokens == model.vocab.tokens
        assert loaded.ruleset == model.ruleset
        assert loaded.log == model.log
        assert params_equal(loaded.params, model.params)
        probe = make_dataset(name="probe")
        np.testing.assert_array_equal(predict(loaded, probe)[1], predict(model, probe)[1])

    def test_save_is_byte_deterministic(self, tmp_path):
        model = self.trained()
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        save_model(model, a)
        save_model(model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_file_size_arithmetic(self, tmp_path):
        """magic(4) + version(1) + length(4) + manifest + 8 bytes per
        parameter + crc(4)."""
        model = self.trained()
        path = tmp_path / "model.bin"
        save_model(model, path)
        blob = path.read_bytes()
        (manifest_len,) = struct.unpack("<I", blob[5:9])
        assert len(blob) == 9 + manifest_len + 8 * model.params.num_parameters() + 4

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(self.trained(), path)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(IncompatibleCheckpoint):
            load_model(path)

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(self.trained(), path)
        blob = bytearray(path.read_bytes())
        blob[len(CHECKPOINT_MAGIC)] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(IncompatibleCheckpoint):
            load_model(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(self.trained(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CorruptCheckpoint):
            load_model(path)

    def test_bit_flip_detected_by_crc(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(self.trained(), path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpoint):
            load_model(path)

    def test_not_a_checkpoint_at_all(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"PK\x03\x04 definitely a zip")
        with pytest.raises(IncompatibleCheckpoint):
            load_model(path)

    def test_tiny_file(self, tmp_path):
        path = tmp_path / "tiny.bin"
        path.write_bytes(b"NL")
        with pytest.raises(CorruptCheckpoint):
            load_model(path)

    def test_no_temp_file_left_behind(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(self.trained(), path)
        assert [p.name for p in tmp_path.iterdir()] == ["model.bin"]


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"dropout": 1.0},
            {"dropout": -0.1},
            {"dev_fraction": 1.0},
            {"patience": -1},
            {"filter_widths": ()},
        ],
    )
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_effective_pad_defaults_to_widest_filter(self):
        assert TrainConfig(filter_widths=(2, 5, 3)).effective_pad == 5
        assert TrainConfig(pad_to=9).effective_pad == 9
