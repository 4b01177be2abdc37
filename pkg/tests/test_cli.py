"""End-to-end command-line behaviour on temporary files."""

import logging

import numpy as np
import pytest

import classlm as cl
from classlm.cli import build_parser, main

import support


@pytest.fixture()
def toy_files(tmp_path):
    """Corpus, architecture and class files for a small training run."""
    train = tmp_path / "train.txt"
    train.write_text("a b c d\n" * 120)
    dev = tmp_path / "dev.txt"
    dev.write_text("a b c d\n" * 10)
    arch = tmp_path / "arch.net"
    arch.write_text(support.SMALL_ARCH)
    return {"train": train, "dev": dev, "arch": arch, "dir": tmp_path}


def _train(toy_files, model_name="model.clm", extra=()):
    model = toy_files["dir"] / model_name
    rc = main(
        [
            "train",
            "--train", str(toy_files["train"]),
            "--dev", str(toy_files["dev"]),
            "--arch", str(toy_files["arch"]),
            "--output-model", str(model),
            "--max-epochs", "2",
            "--seed", "7",
            *extra,
        ]
    )
    assert rc == 0
    return model


def test_classes_command_writes_monotone_trace(tmp_path, caplog):
    corpus = tmp_path / "corpus.txt"
    rng = np.random.default_rng(0)
    corpus.write_text("\n".join(" ".join(support.family_corpus(rng, 2, 3, 40))
                                for _ in range(10)) + "\n")
    out = tmp_path / "classes.tsv"
    with caplog.at_level(logging.INFO):
        rc = main(["classes", "--corpus", str(corpus), "--num-classes", "2",
                   "--output", str(out), "--seed", "3"])
    assert rc == 0
    values = [float(rec.message.rsplit(" ", 1)[-1]) for rec in caplog.records
              if "log-likelihood" in rec.message]
    assert len(values) >= 2
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
    vocab, classmap = cl.load_class_file(out)
    assert classmap.num_classes == 2 + 3


def test_classes_command_single_class(tmp_path):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("a b a c\n")
    out = tmp_path / "classes.tsv"
    assert main(["classes", "--corpus", str(corpus), "--num-classes", "1",
                 "--output", str(out)]) == 0
    vocab, classmap = cl.load_class_file(out)
    regular = [w for w in range(len(vocab)) if vocab.words[w] not in cl.vocabulary.RESERVED]
    assert len({int(classmap.class_of[w]) for w in regular}) == 1


def test_classes_default_is_2000():
    parser = build_parser()
    args = parser.parse_args(["classes", "--corpus", "x", "--output", "y"])
    assert args.num_classes == 2000


def test_train_score_round_trip_perplexities_match(toy_files):
    model = _train(toy_files)
    _, training = cl.load_model(model)
    out = toy_files["dir"] / "scores.txt"
    rc = main(["score", "--model", str(model), "--input", str(toy_files["dev"]),
               "--output", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[-1].startswith("ppl\t")
    ppl = float(lines[-1].split("\t")[1])
    assert ppl == pytest.approx(training["best_dev_perplexity"], abs=1e-6)
    # one line per sentence plus the perplexity line
    assert len(lines) == 10 + 1


def test_train_same_seed_reproduces_model(toy_files):
    m1 = _train(toy_files, "m1.clm")
    m2 = _train(toy_files, "m2.clm")
    assert m1.read_bytes() == m2.read_bytes()


def test_train_with_class_file(toy_files):
    classes = toy_files["dir"] / "classes.tsv"
    rc = main(["classes", "--corpus", str(toy_files["train"]), "--num-classes", "2",
               "--output", str(classes)])
    assert rc == 0
    model = _train(toy_files, "mc.clm", extra=["--classes", str(classes)])
    net, _ = cl.load_model(model)
    assert net.classes.num_classes == 5
    assert net.params["output_layer/W"].shape[1] == 5


def test_train_sgd_anneals_adagrad_does_not(toy_files):
    # min-improvement 1.0 turns every later validation into a failure
    msgd = _train(toy_files, "sgd.clm",
                  extra=["--optimizer", "sgd", "--min-improvement", "1.0",
                         "--validation-interval", "2", "--patience", "3"])
    _, tr = cl.load_model(msgd)
    sgd_scales = [s for _, _, s in tr["history"]]
    assert sgd_scales[-1] < 1.0

    mada = _train(toy_files, "ada.clm",
                  extra=["--optimizer", "adagrad", "--min-improvement", "1.0",
                         "--validation-interval", "2", "--patience", "3"])
    _, tr = cl.load_model(mada)
    assert all(s == 1.0 for _, _, s in tr["history"])


def test_train_rejects_invalid_architecture(toy_files, caplog):
    bad = toy_files["dir"] / "bad.net"
    bad.write_text(
        "input type=class name=a\n"
        "layer type=projection name=p input=a size=4\n"
        "layer type=tanh name=t input=p size=4\n"
    )
    with caplog.at_level(logging.ERROR):
        rc = main(["train", "--train", str(toy_files["train"]), "--dev", str(toy_files["dev"]),
                   "--arch", str(bad), "--output-model", str(toy_files["dir"] / "x.clm")])
    assert rc == 1
    assert any("line 3" in rec.message and "softmax" in rec.message for rec in caplog.records)


def test_score_uniform_model_ppl_is_vocab_size(tmp_path):
    words = [f"w{i}" for i in range(7)]
    vocab = cl.Vocabulary(words, {w: 1 for w in words})
    net = cl.instantiate_network(
        cl.parse_description(support.SMALL_ARCH), vocab, cl.identity_classmap(vocab), seed=0
    )
    net.params["output_layer/W"][:] = 0.0
    net.params["output_layer/b"][:] = 0.0
    model = tmp_path / "uniform.clm"
    cl.save_model(model, net)
    corpus = tmp_path / "in.txt"
    corpus.write_text("w0 w1\nw2\n")
    out = tmp_path / "out.txt"
    assert main(["score", "--model", str(model), "--input", str(corpus),
                 "--output", str(out)]) == 0
    ppl = float(out.read_text().splitlines()[-1].split("\t")[1])
    assert ppl == pytest.approx(10.0, abs=1e-6)


def test_score_unk_policies(toy_files, tmp_path):
    model = _train(toy_files)
    clean = tmp_path / "clean.txt"
    clean.write_text("a b c d\na b\n")
    noisy = tmp_path / "noisy.txt"
    noisy.write_text("a OOV c d\n")

    def ppl_of(corpus, *flags):
        out = tmp_path / "s.txt"
        assert main(["score", "--model", str(model), "--input", str(corpus),
                     "--output", str(out), *flags]) == 0
        return float(out.read_text().splitlines()[-1].split("\t")[1])

    # identical on unknown-free input
    assert ppl_of(clean) == ppl_of(clean, "--unk-penalty", "0")
    # differ when unknowns are present
    assert ppl_of(noisy) != ppl_of(noisy, "--unk-penalty", "0")
    # duplicated corpus keeps the perplexity
    doubled = tmp_path / "doubled.txt"
    doubled.write_text(clean.read_text() * 2)
    assert ppl_of(doubled) == pytest.approx(ppl_of(clean), rel=1e-9)


def test_score_rejects_nonzero_unk_penalty(toy_files, caplog):
    model = _train(toy_files)
    with caplog.at_level(logging.ERROR):
        rc = main(["score", "--model", str(model), "--input", str(toy_files["dev"]),
                   "--unk-penalty", "-1.5"])
    assert rc == 1


def _write_nbest(path):
    path.write_text(
        "u1 0.0 -1.0 d c b a\n"
        "u1 0.0 -9.0 a b c d\n"
        "u2 0.0 -2.0 b b b b\n"
        "u2 0.0 -8.0 a b c d\n"
        "u3 0.0 -3.0 a a d d\n"
        "u3 0.0 -7.0 a b c d\n"
    )


def test_rescore_lambda_endpoints(toy_files, tmp_path):
    model = _train(toy_files, extra=["--max-epochs", "4"])
    nbest = tmp_path / "nbest.txt"
    _write_nbest(nbest)

    out0 = tmp_path / "r0.txt"
    assert main(["rescore", "--model", str(model), "--nbest", str(nbest),
                 "--lambda", "0", "--output", str(out0)]) == 0
    tops0 = [line.split("\t")[2] for line in out0.read_text().splitlines()[1:]][::2]
    assert tops0 == ["d c b a", "b b b b", "a a d d"]  # back-off ranking

    out1 = tmp_path / "r1.txt"
    assert main(["rescore", "--model", str(model), "--nbest", str(nbest),
                 "--lambda", "1", "--output", str(out1)]) == 0
    tops1 = [line.split("\t")[2] for line in out1.read_text().splitlines()[1:]][::2]
    assert tops1 == ["a b c d"] * 3  # the trained model's ranking


def test_rescore_tuning_picks_positive_lambda(toy_files, tmp_path, caplog):
    model = _train(toy_files, extra=["--max-epochs", "4"])
    nbest = tmp_path / "nbest.txt"
    _write_nbest(nbest)
    refs = tmp_path / "refs.txt"
    refs.write_text("u1 a b c d\nu2 a b c d\nu3 a b c d\n")
    out = tmp_path / "tuned.txt"
    with caplog.at_level(logging.INFO):
        rc = main(["rescore", "--model", str(model), "--nbest", str(nbest),
                   "--tune", "--refs", str(refs), "--grid-lambda", "0,0.25,0.5,0.75,1",
                   "--grid-snn", "1", "--output", str(out)])
    assert rc == 0
    header = out.read_text().splitlines()[0]
    lam = float(header.split()[1].split("=")[1])
    assert lam > 0.0
    tops = [line.split("\t")[2] for line in out.read_text().splitlines()[1:]][::2]
    assert tops == ["a b c d"] * 3


def test_rescore_malformed_nbest_reports_line(toy_files, tmp_path, caplog):
    model = _train(toy_files)
    nbest = tmp_path / "bad.txt"
    nbest.write_text("u1 0.0 -1.0 ok\nu2 bad -2.0 oops\n")
    with caplog.at_level(logging.ERROR):
        rc = main(["rescore", "--model", str(model), "--nbest", str(nbest)])
    assert rc == 1
    assert any("line 2" in rec.message for rec in caplog.records)


def test_sample_deterministic_and_count_zero(toy_files, capsys):
    model = _train(toy_files, extra=["--max-epochs", "4"])
    assert main(["sample", "--model", str(model), "--count", "5",
                 "--max-tokens", "8", "--seed", "9"]) == 0
    first = capsys.readouterr().out
    assert main(["sample", "--model", str(model), "--count", "5",
                 "--max-tokens", "8", "--seed", "9"]) == 0
    assert capsys.readouterr().out == first
    assert len(first.splitlines()) == 5

    assert main(["sample", "--model", str(model), "--count", "0"]) == 0
    assert capsys.readouterr().out == ""


def test_missing_model_file_fails_cleanly(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        rc = main(["score", "--model", str(tmp_path / "nope.clm"), "--input", "x"])
    assert rc == 1


def test_train_max_vocab_limits_vocabulary(toy_files):
    model = _train(toy_files, "small_vocab.clm", extra=["--max-vocab", "5"])
    net, _ = cl.load_model(model)
    assert len(net.vocab) == 5  # three reserved tokens plus the top two words


def test_train_single_precision(toy_files):
    model = _train(toy_files, "single.clm", extra=["--precision", "single"])
    net, _ = cl.load_model(model)
    assert net.params["output_layer/W"].dtype == np.float32
    out = toy_files["dir"] / "s32.txt"
    assert main(["score", "--model", str(model), "--input", str(toy_files["dev"]),
                 "--output", str(out)]) == 0
    assert out.read_text().splitlines()[-1].startswith("ppl\t")


def test_train_divergence_exits_nonzero(toy_files):
    model = toy_files["dir"] / "diverged.clm"
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main([
            "train",
            "--train", str(toy_files["train"]),
            "--dev", str(toy_files["dev"]),
            "--arch", str(toy_files["arch"]),
            "--output-model", str(model),
            "--optimizer", "sgd",
            "--learning-rate", "1e18",
            "--clip-norm", "0",
            "--validation-interval", "1",
            "--max-epochs", "1",
        ])
    assert rc == 1
    # the saved model is the last good checkpoint
    net, training = cl.load_model(model)
    assert all(np.isfinite(v).all() for v in net.params.values())
    assert training["stopped_reason"] == "diverged"
