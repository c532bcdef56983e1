import pytest

from symir.corpus import Triplet, read_kv_config, read_triplets, write_triplets


def test_triplet_requires_music_and_text():
    with pytest.raises(ValueError):
        Triplet(abc="", mtf="x", raw_text="t")
    with pytest.raises(ValueError):
        Triplet(abc="a", mtf="m")
    Triplet(abc="a", mtf="m", llm_en="only summary")


def test_jsonl_round_trip(tmp_path):
    triplets = [
        Triplet(abc="X:1\nK:C\nC |]\n", mtf="ticks_per_beat 480\n",
                raw_text="Title: One"),
        Triplet(abc="X:2\nK:G\nG |]\n", mtf="ticks_per_beat 96\n",
                llm_en="A tune.", llm_nen="##fr## Un air.", lang="fr"),
    ]
    path = tmp_path / "corpus.jsonl"
    write_triplets(path, triplets)
    assert read_triplets(path) == triplets


def test_bad_record_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"abc": "a", "mtf": "m", "raw_text": "t"}\n{"abc": "a"}\n')
    with pytest.raises(ValueError) as exc:
        read_triplets(path)
    assert ":2:" in str(exc.value)


def test_kv_config(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("# comment\nbatch_size = 8\nlearning_rate=1e-3\n\nseed=4\n")
    assert read_kv_config(path) == {"batch_size": "8",
                                    "learning_rate": "1e-3", "seed": "4"}
    path.write_text("not a pair\n")
    with pytest.raises(ValueError):
        read_kv_config(path)
