import numpy as np
import pytest

from synthetic_task import make_dataset
from pxre.data import Dataset, LabelSpace, RelationInstance
from pxre.experiment import (
    Checkpoint,
    CheckpointSet,
    ExperimentConfig,
    ExperimentError,
    TrainedModel,
    UniformRandomModel,
    build_model,
    evaluate,
    select_checkpoint,
    train,
    unlabeled_view,
    zero_shot_eval,
)
from pxre.head import HeadConfigError
from pxre.model import BackboneConfig, BackboneStates
from pxre.templates import get_template
from pxre.vocab import build_vocab

TINY_BB = BackboneConfig(
    d_model=16, n_layers_enc=1, n_layers_dec=1, n_heads=2, ffn_width=24, max_len=64, seed=0
)


def tiny_config(**kwargs):
    defaults = dict(
        template="Prompt_3",
        source_lang="en",
        backbone=TINY_BB,
        lr=2e-3,
        batch_size=8,
        max_epochs=2,
        seed=0,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def _ckpt(epoch, loss):
    return Checkpoint(epoch=epoch, dev_loss=loss, backbone_params={}, head_state={})


def _ckpt_set(losses, start_epoch=1):
    cfg = tiny_config()
    return CheckpointSet(
        checkpoints=tuple(_ckpt(i + start_epoch, x) for i, x in enumerate(losses)),
        config=cfg,
        vocab=build_vocab([["a"]]),
        label_space=LabelSpace(("A",)),
        template=get_template("Prompt_3"),
    )


def test_select_checkpoint_argmin():
    assert select_checkpoint(_ckpt_set([0.9, 0.4, 0.7])).epoch == 2


def test_select_checkpoint_tie_earliest():
    assert select_checkpoint(_ckpt_set([0.5, 0.5])).epoch == 1


def test_select_checkpoint_single():
    cs = _ckpt_set([0.3])
    assert select_checkpoint(cs) is cs.checkpoints[0]


def test_zero_epochs_keeps_initialization():
    train_ds = make_dataset(8, "en", "fa", seed=1)
    dev_ds = make_dataset(4, "en", "fa", seed=2, split="dev")
    ckpts = train(tiny_config(max_epochs=0), train_ds, dev_ds)
    assert len(ckpts) == 1
    assert ckpts.checkpoints[0].epoch == 0


def test_empty_dev_rejected():
    train_ds = make_dataset(8, "en", "fa", seed=1)
    empty_dev = Dataset("d", "en", "dev", (), train_ds.label_space)
    with pytest.raises(ExperimentError, match="dev set required"):
        train(tiny_config(), train_ds, empty_dev)


def test_empty_train_rejected():
    dev_ds = make_dataset(4, "en", "fa", seed=2, split="dev")
    empty_train = Dataset("d", "en", "train", (), dev_ds.label_space)
    with pytest.raises(ExperimentError, match="empty training set"):
        train(tiny_config(), empty_train, dev_ds)


def test_label_space_mismatch_rejected():
    train_ds = make_dataset(8, "en", "fa", seed=1)
    other = make_dataset(4, "en", "fa", seed=2, split="dev", n_labels=3)
    with pytest.raises(ExperimentError, match="label-space mismatch"):
        train(tiny_config(), train_ds, other)


def test_wrong_source_language_rejected():
    train_ds = make_dataset(8, "zh", "fb", seed=1)
    dev_ds = make_dataset(4, "zh", "fb", seed=2, split="dev")
    with pytest.raises(ExperimentError, match="source_lang"):
        train(tiny_config(source_lang="en"), train_ds, dev_ds)


def test_mask_position_pooling_needs_decoder_mask():
    train_ds = make_dataset(8, "en", "fa", seed=1)
    dev_ds = make_dataset(4, "en", "fa", seed=2, split="dev")
    cfg = tiny_config(template="Prompt_1", pooling="mask_position")
    with pytest.raises(HeadConfigError, match="Prompt_1"):
        train(cfg, train_ds, dev_ds)


def test_training_determinism():
    train_ds = make_dataset(16, "en", "fa", seed=1)
    dev_ds = make_dataset(8, "en", "fa", seed=2, split="dev")
    test_ds = make_dataset(8, "en", "fa", seed=3, split="test")
    runs = []
    for _ in range(2):
        ckpts = train(tiny_config(max_epochs=3), train_ds, dev_ds)
        model = build_model(ckpts)
        runs.append(
            (
                [c.dev_loss for c in ckpts.checkpoints],
                model.predict(unlabeled_view(test_ds)),
            )
        )
    assert runs[0] == runs[1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_non_finite_loss_aborts():
    train_ds = make_dataset(16, "en", "fa", seed=1)
    dev_ds = make_dataset(4, "en", "fa", seed=2, split="dev")
    with pytest.raises(RuntimeError, match="non-finite"):
        train(tiny_config(lr=1e160, max_epochs=2), train_ds, dev_ds)


def test_training_with_dropout_is_deterministic():
    train_ds = make_dataset(16, "en", "fa", seed=1)
    dev_ds = make_dataset(8, "en", "fa", seed=2, split="dev")
    bb = BackboneConfig(
        d_model=16, n_layers_enc=1, n_layers_dec=1, n_heads=2, ffn_width=24,
        max_len=64, dropout=0.3, seed=0,
    )
    losses = []
    for _ in range(2):
        ckpts = train(tiny_config(backbone=bb, max_epochs=2), train_ds, dev_ds)
        assert all(np.isfinite(c.dev_loss) for c in ckpts.checkpoints)
        losses.append([c.dev_loss for c in ckpts.checkpoints])
    assert losses[0] == losses[1]


def test_verbalizer_training_runs():
    train_ds = make_dataset(16, "en", "fa", seed=1)
    dev_ds = make_dataset(8, "en", "fa", seed=2, split="dev")
    cfg = tiny_config(head_mode="verbalizer", max_epochs=2)
    ckpts = train(cfg, train_ds, dev_ds)
    model = build_model(ckpts)
    preds = model.predict(unlabeled_view(dev_ds))
    assert len(preds) == len(dev_ds)
    assert set(preds) <= set(train_ds.label_space.labels)


def test_verbalizer_needs_decoder_mask():
    train_ds = make_dataset(8, "en", "fa", seed=1)
    dev_ds = make_dataset(4, "en", "fa", seed=2, split="dev")
    with pytest.raises(HeadConfigError, match="verbalizer"):
        train(tiny_config(head_mode="verbalizer", template="Prompt_5"), train_ds, dev_ds)


def _trained_model(max_epochs=2, **cfg_kwargs):
    train_ds = make_dataset(24, "en", "fa", seed=1)
    dev_ds = make_dataset(8, "en", "fa", seed=2, split="dev")
    cfg = tiny_config(max_epochs=max_epochs, **cfg_kwargs)
    ckpts = train(cfg, train_ds, dev_ds)
    return build_model(ckpts), cfg


def test_evaluate_empty_dataset():
    model, _ = _trained_model()
    empty = Dataset("d", "en", "test", (), model.label_space)
    with pytest.raises(ExperimentError, match="empty evaluation set"):
        evaluate(model, empty)


def test_evaluate_label_space_mismatch():
    model, _ = _trained_model()
    other = make_dataset(4, "en", "fa", seed=5, n_labels=3)
    with pytest.raises(ExperimentError, match="label space"):
        evaluate(model, other)


def test_evaluate_unregistered_language():
    model, _ = _trained_model()
    ds = make_dataset(4, "fr", "ff", seed=5)
    with pytest.raises(Exception, match="not registered"):
        evaluate(model, ds)


def test_uniform_random_statistics():
    space = LabelSpace(tuple(f"L{i}" for i in range(18)))
    insts = tuple(
        RelationInstance(f"i{k}", "en", ("a", "b"), (0, 1), (1, 2), space.labels[k % 18])
        for k in range(1800)
    )
    ds = Dataset("d", "en", "test", insts, space)
    report = evaluate(UniformRandomModel(space, seed=3), ds)
    assert abs(report.accuracy - 1.0 / 18.0) < 0.02
    assert report.model == "uniform-random"


def test_all_correct_report():
    space = LabelSpace(("A", "B"))

    class Echo:
        label_space = space
        source_lang = "en"
        name = "echo"
        fingerprint = "echo"

        def predict(self, instances):
            return ["A" if i.id.startswith("a") else "B" for i in instances]

    insts = (
        RelationInstance("a1", "en", ("x", "y"), (0, 1), (1, 2), "A"),
        RelationInstance("b1", "en", ("x", "y"), (0, 1), (1, 2), "B"),
    )
    report = evaluate(Echo(), Dataset("d", "en", "t", insts, space))
    assert report.accuracy == report.micro_f1 == report.macro_f1 == 1.0


def test_zero_shot_source_equals_monolingual():
    model, cfg = _trained_model(max_epochs=3)
    test_ds = make_dataset(20, "en", "fa", seed=9, split="test")
    direct = evaluate(model, test_ds)
    via_zero_shot = zero_shot_eval(cfg, model, [test_ds])[0]
    assert direct == via_zero_shot


def test_zero_shot_direction_labels():
    model, cfg = _trained_model()
    zh = make_dataset(10, "zh", "fb", seed=4, split="test")
    ar = make_dataset(10, "ar", "fc", seed=5, split="test")
    reports = zero_shot_eval(cfg, model, [zh, ar])
    assert [r.direction_label for r in reports] == ["En-Zh", "En-Ar"]


def test_zero_shot_template_mismatch():
    model, _ = _trained_model()
    other_cfg = tiny_config(template="Prompt_1")
    with pytest.raises(ExperimentError, match="template mismatch"):
        zero_shot_eval(other_cfg, model, [])


def test_protocol_purity_labels_unreadable():
    model, _ = _trained_model()
    ds = make_dataset(12, "zh", "fb", seed=4, split="test")
    poisoned = Dataset(
        ds.name,
        ds.lang,
        ds.split,
        tuple(
            RelationInstance(i.id, i.lang, i.tokens, i.subj_span, i.obj_span, ds.label_space.labels[0])
            for i in ds.instances
        ),
        ds.label_space,
    )
    assert model.predict(unlabeled_view(ds)) == model.predict(unlabeled_view(poisoned))
    view = unlabeled_view(ds)
    assert not hasattr(view[0], "label")


def test_pluggable_backbone_contract():
    """A substitute backbone exposing only vocab/d_model/max_len/forward must
    run through prediction and evaluation unchanged."""
    vocab = build_vocab([["a", "b", "c"]])

    class StubBackbone:
        def __init__(self):
            self.vocab = vocab
            self.d_model = 8
            self.max_len = 64

        def forward(self, enc_ids, dec_ids):
            dec_ids = np.asarray(dec_ids)
            rng = np.random.default_rng(int(dec_ids.sum()))
            return BackboneStates(
                v_enc=rng.normal(size=(len(np.asarray(enc_ids)), 8)),
                v_dec=rng.normal(size=(len(dec_ids), 8)),
                dec_pad_mask=np.ones(len(dec_ids), dtype=bool),
            )

    from pxre.head import init_head

    space = LabelSpace(("A", "B"))
    model = TrainedModel(
        backbone=StubBackbone(),
        head=init_head(2, 8, pooling="last_token", seed=0),
        vhead=None,
        template=get_template("Prompt_3"),
        label_space=space,
        config=tiny_config(),
        name="stub",
    )
    insts = tuple(
        RelationInstance(f"i{k}", "en", ("a", "b", "c"), (0, 1), (2, 3), space.labels[k % 2])
        for k in range(6)
    )
    report = evaluate(model, Dataset("d", "en", "t", insts, space))
    assert report.n_instances == 6
    assert 0.0 <= report.accuracy <= 1.0


def test_fingerprint_stability_and_sensitivity():
    a = tiny_config()
    b = tiny_config()
    c = tiny_config(lr=9e-3)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_config_roundtrip():
    cfg = tiny_config(target_langs=("zh", "ar"), verbalizer=(("A", "wa"),))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.fingerprint() == cfg.fingerprint()


def test_config_rejects_unregistered_languages():
    with pytest.raises(ExperimentError, match="not registered"):
        tiny_config(source_lang="fr")
    with pytest.raises(ExperimentError, match="not registered"):
        tiny_config(target_langs=("xx",))
