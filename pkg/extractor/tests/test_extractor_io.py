import csv
from pathlib import Path

import numpy as np
import pytest
from conftest import parse_clip

from cmta_extractor import ClipWriteError, write_clip, write_manifest


class TestWriteClip:
    def test_round_trip_through_independent_parser(self, tmp_path: Path):
        rng = np.random.default_rng(0)
        visual = rng.standard_normal((5, 7)).astype(np.float32)
        textual = rng.standard_normal((5, 7)).astype(np.float32)
        out = tmp_path / "clip.cmta"
        write_clip(out, visual, textual, label=1)
        label, v, t = parse_clip(out)
        assert label == 1
        assert np.array_equal(v, visual)
        assert np.array_equal(t, textual)

    def test_header_fields(self, tmp_path: Path):
        out = tmp_path / "clip.cmta"
        write_clip(out, np.zeros((3, 4), np.float32), np.zeros((3, 6), np.float32), 0)
        blob = out.read_bytes()
        assert blob[:4] == b"CMTA"
        assert len(blob) == 19 + 4 * (3 * 4 + 3 * 6)

    def test_no_temp_files_left_behind(self, tmp_path: Path):
        out = tmp_path / "clip.cmta"
        write_clip(out, np.ones((2, 3), np.float32), np.ones((2, 3), np.float32), 0)
        assert [p.name for p in tmp_path.iterdir()] == ["clip.cmta"]

    def test_overwrite_is_deterministic(self, tmp_path: Path):
        out = tmp_path / "clip.cmta"
        visual = np.full((2, 3), 0.5, np.float32)
        textual = np.full((2, 3), -0.5, np.float32)
        write_clip(out, visual, textual, 1)
        first = out.read_bytes()
        write_clip(out, visual, textual, 1)
        assert out.read_bytes() == first

    @pytest.mark.parametrize(
        "visual,textual,label",
        [
            (np.zeros((2, 3)), np.zeros((3, 3)), 0),  # frame-count mismatch
            (np.zeros((0, 3)), np.zeros((0, 3)), 0),  # empty clip
            (np.zeros((2, 3)), np.zeros((2, 3)), 2),  # bad label
            (np.zeros(3), np.zeros(3), 0),            # wrong rank
        ],
    )
    def test_rejects_invalid_inputs(self, tmp_path, visual, textual, label):
        with pytest.raises(ClipWriteError):
            write_clip(tmp_path / "x.cmta", visual, textual, label)

    def test_rejects_non_finite(self, tmp_path: Path):
        visual = np.zeros((2, 3), np.float32)
        visual[1, 1] = np.nan
        with pytest.raises(ClipWriteError):
            write_clip(tmp_path / "x.cmta", visual, np.zeros((2, 3)), 0)


class TestWriteManifest:
    def test_header_and_rows(self, tmp_path: Path):
        out = tmp_path / "manifest.csv"
        write_manifest(out, [("a.cmta", 0, "real"), ("b.cmta", 1, "fake")])
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows == [
            ["path", "label", "subset"],
            ["a.cmta", "0", "real"],
            ["b.cmta", "1", "fake"],
        ]

    def test_empty_manifest_has_header_only(self, tmp_path: Path):
        out = tmp_path / "manifest.csv"
        write_manifest(out, [])
        with open(out, newline="") as fh:
            assert list(csv.reader(fh)) == [["path", "label", "subset"]]
