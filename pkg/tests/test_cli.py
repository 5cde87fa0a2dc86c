"""命令行：退出码、报告格式与产物文件"""

import json

import pytest

from bip_lab.cli import EXIT_CHECK_FAILED, EXIT_INPUT_ERROR, EXIT_PASS, main
from bip_lab.services import space_service
from bip_lab.services.report_service import REPORT_HEADER
from bip_lab.utils.io import read_csv


def dirac(n, i):
    return [1.0 if k == i else 0.0 for k in range(n)]


def uniform(n, points):
    return [1.0 / len(points) if k in points else 0.0 for k in range(n)]


@pytest.fixture
def line5_file(json_file):
    return json_file("line5.json", space_service.line(5).to_dict())


@pytest.fixture
def line17_file(json_file):
    return json_file("line17.json", space_service.line(17).to_dict())


class TestValidate:
    """validate 子命令"""

    def test_valid_space(self, line5_file, tmp_path):
        report = tmp_path / "report.json"
        assert main(["validate", "--space", line5_file, "--report", str(report)]) == EXIT_PASS
        document = json.loads(report.read_text(encoding="utf-8"))
        assert document["pass"] is True
        assert document["reports"][0]["data"]["diameter"] == 4.0

    def test_stdout_report_is_pure_json(self, line5_file, capsys):
        """不带 --report 时 stdout 只有 JSON 报告，横幅与摘要进 stderr"""
        assert main(["validate", "--space", line5_file]) == EXIT_PASS
        captured = capsys.readouterr()
        document = json.loads(captured.out)
        assert document["pass"] is True
        assert all(c["paper_ref"] for c in document["reports"][0]["checks"])
        assert "开始执行" in captured.err
        assert "检查:" in captured.err

    def test_banner_on_stdout_with_report_file(self, line5_file, tmp_path, capsys):
        report = tmp_path / "report.json"
        assert main(["validate", "--space", line5_file, "--report", str(report)]) == EXIT_PASS
        assert "全部检查通过" in capsys.readouterr().out

    def test_invalid_space_fails_checks(self, json_file):
        path = json_file("bad.json", {"points": 2, "dist": [[0, 1], [2, 0]], "weights": [1, 1]})
        assert main(["validate", "--space", path]) == EXIT_CHECK_FAILED

    def test_missing_file(self, tmp_path):
        assert main(["validate", "--space", str(tmp_path / "nope.json")]) == EXIT_INPUT_ERROR

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"points\": 3,", encoding="utf-8")
        assert main(["validate", "--space", str(path)]) == EXIT_INPUT_ERROR

    def test_missing_field(self, json_file):
        path = json_file("nofield.json", {"points": 2, "weights": [1, 1]})
        assert main(["validate", "--space", path]) == EXIT_INPUT_ERROR


class TestWasserstein:
    """wasserstein 子命令与耦合产物"""

    def test_distance_and_coupling(self, line5_file, json_file, tmp_path, capsys):
        mu0 = json_file("mu0.json", dirac(5, 0))
        mu1 = json_file("mu1.json", {"mass": dirac(5, 3)})
        out = tmp_path / "coupling.csv"
        code = main(["wasserstein", "--space", line5_file, "--mu0", mu0, "--mu1", mu1,
                     "--q", "2", "--out", str(out)])
        assert code == EXIT_PASS
        assert "W_2 = 3" in capsys.readouterr().err
        header, rows = read_csv(str(out))
        assert header == ["source", "target", "mass"]
        assert rows == [["0", "3", "1.0"]]

    def test_measure_length(self, line5_file, json_file):
        mu0 = json_file("mu0.json", dirac(4, 0))
        mu1 = json_file("mu1.json", dirac(5, 0))
        assert main(["wasserstein", "--space", line5_file, "--mu0", mu0, "--mu1", mu1]) == EXIT_INPUT_ERROR

    def test_invalid_exponent(self, line5_file, json_file):
        mu = json_file("mu.json", dirac(5, 0))
        assert main(["wasserstein", "--space", line5_file, "--mu0", mu, "--mu1", mu,
                     "--q", "1"]) == EXIT_INPUT_ERROR


class TestInterpolate:
    """interpolate 子命令与 trace 产物"""

    def test_trace(self, line17_file, json_file, tmp_path):
        mu0 = json_file("mu0.json", uniform(17, [0, 1, 2, 3]))
        mu1 = json_file("mu1.json", uniform(17, [8, 9, 10, 11]))
        out = tmp_path / "trace.csv"
        report = tmp_path / "report.json"
        code = main(["interpolate", "--space", line17_file, "--mu0", mu0, "--mu1", mu1,
                     "--K", "-0.1", "--levels", "3", "--out", str(out), "--report", str(report)])
        assert code == EXIT_PASS
        header, rows = read_csv(str(out))
        assert header == ["time", "point", "mass", "density", "level_cap"]
        assert len(rows) == 9 * 4
        data = json.loads(report.read_text(encoding="utf-8"))["reports"][0]["data"]
        assert data["met_target"] is True
        assert "C_twelfth" in data and "C_sixth" in data


class TestBipVerify:
    """bip-verify 子命令"""

    def test_flat_line_passes(self, line5_file, json_file):
        pairs = json_file("pairs.json", [[dirac(5, 0), dirac(5, 4)]])
        code = main(["bip-verify", "--space", line5_file, "--pairs", pairs,
                     "--profile", '{"kind": "cd_infty", "K": 0}', "--levels", "2"])
        assert code == EXIT_PASS

    def test_pinched_space_fails(self, json_file, tmp_path):
        space = json_file("pinched.json", space_service.pinched(3, 1e-3).to_dict())
        pairs = json_file("pairs.json", [{"mu0": dirac(7, 0), "mu1": dirac(7, 4)}])
        profile = json_file("profile.json", {"kind": "sampled", "samples": [[0, 1]]})
        report = tmp_path / "report.csv"
        code = main(["bip-verify", "--space", space, "--pairs", pairs, "--profile", profile,
                     "--levels", "2", "--report", str(report), "--format", "csv"])
        assert code == EXIT_CHECK_FAILED
        header, rows = read_csv(str(report))
        assert tuple(header) == REPORT_HEADER
        ids = [row[0] for row in rows]
        assert ids == sorted(ids)
        assert {row[5] for row in rows} == {"false"}

    def test_bad_profile(self, line5_file, json_file):
        pairs = json_file("pairs.json", [[dirac(5, 0), dirac(5, 4)]])
        assert main(["bip-verify", "--space", line5_file, "--pairs", pairs,
                     "--profile", '{"kind": "unknown"}']) == EXIT_INPUT_ERROR
        assert main(["bip-verify", "--space", line5_file, "--pairs", pairs,
                     "--profile", "{not json"]) == EXIT_INPUT_ERROR


class TestCurvatureCheck:
    """curvature-check 子命令"""

    @pytest.fixture
    def translation_pairs(self, json_file):
        return json_file("pairs.json", [[uniform(17, [0, 1, 2, 3]), uniform(17, [8, 9, 10, 11])]])

    def test_flat_translation(self, line17_file, translation_pairs):
        assert main(["curvature-check", "--space", line17_file, "--pairs", translation_pairs,
                     "--kind", "cd_infty", "--K", "0", "--levels", "2"]) == EXIT_PASS

    def test_large_curvature_fails(self, line17_file, translation_pairs):
        assert main(["curvature-check", "--space", line17_file, "--pairs", translation_pairs,
                     "--kind", "cd_infty", "--K", "10", "--levels", "2"]) == EXIT_CHECK_FAILED

    def test_dimension_required(self, line17_file, translation_pairs):
        assert main(["curvature-check", "--space", line17_file, "--pairs", translation_pairs,
                     "--kind", "mcp"]) == EXIT_INPUT_ERROR

    def test_missing_midpoint_becomes_row(self, line5_file, json_file, tmp_path):
        pairs = json_file("pairs.json", [[dirac(5, 0), dirac(5, 1)]])
        report = tmp_path / "report.json"
        code = main(["curvature-check", "--space", line5_file, "--pairs", pairs,
                     "--levels", "1", "--report", str(report)])
        assert code == EXIT_CHECK_FAILED
        checks = json.loads(report.read_text(encoding="utf-8"))["reports"][0]["checks"]
        assert [c["check_id"] for c in checks] == ["pair_0000/geodesic"]


class TestSobolev:
    """sobolev 子命令"""

    def test_solve_writes_gradient(self, line5_file, json_file, tmp_path):
        f = json_file("f.json", [0.0, 1.0, 2.0, 3.0, 4.0])
        out = tmp_path / "gradient.csv"
        code = main(["sobolev", "--space", line5_file, "--f", f, "--family-depth", "1",
                     "--out", str(out)])
        assert code == EXIT_PASS
        header, rows = read_csv(str(out))
        assert header == ["point", "label", "f", "G"]
        assert [row[1] for row in rows] == ["0", "1", "2", "3", "4"]
        assert all(abs(float(row[3]) - 1.0) < 1e-6 for row in rows)

    def test_compare(self, line5_file, json_file):
        f = json_file("f.json", {"values": [0.0, 1.0, 2.0, 3.0, 4.0]})
        assert main(["sobolev", "compare", "--space", line5_file, "--f", f,
                     "--family-depth", "1", "--p1", "1.5", "--p2", "2"]) == EXIT_PASS


class TestPmgh:
    """pmgh 子命令"""

    def test_refining_sequence(self, json_file):
        ambient = space_service.line(9).to_dict()
        coarse = space_service.line(5, spacing=2.0, weights=[2.0] * 5).to_dict()
        limit = {"space": ambient, "embedding": list(range(9))}
        config = json_file("pmgh.json", {
            "ambient": ambient,
            "limit": limit,
            "sequence": [
                {"space": coarse, "embedding": [0, 2, 4, 6, 8],
                 "profile": {"kind": "sampled", "samples": [[0, 2]]}},
                {**limit, "profile": {"kind": "cd_infty", "K": 0}},
            ],
            "pairs": [[dirac(9, 0), dirac(9, 8)]],
            "levels": 2,
        })
        assert main(["pmgh", "--config", config]) == EXIT_PASS

    def test_missing_section(self, json_file):
        config = json_file("pmgh.json", {"ambient": space_service.line(3).to_dict()})
        assert main(["pmgh", "--config", config]) == EXIT_INPUT_ERROR


class TestReport:
    """report 批处理"""

    def test_batch(self, tmp_path, json_file):
        json_file("line5.json", space_service.line(5).to_dict())
        json_file("pinched.json", space_service.pinched(3, 1e-3).to_dict())
        json_file("pairs.json", [[dirac(7, 0), dirac(7, 4)]])
        config = json_file("batch.json", {"experiments": [
            {"command": "validate", "paths": {"space": "line5.json"}},
            {"command": "bip-verify", "paths": {"space": "pinched.json", "pairs": "pairs.json"},
             "params": {"profile": '{"kind": "cd_infty", "K": 0}', "levels": 1}},
        ]})
        report = tmp_path / "all.json"
        assert main(["report", "--config", config, "--report", str(report)]) == EXIT_CHECK_FAILED
        document = json.loads(report.read_text(encoding="utf-8"))
        children = document["reports"][0]["data"]["children"]
        assert [c["pass"] for c in children] == [True, False]
        ids = [c["check_id"] for c in document["reports"][0]["checks"]]
        assert ids[0].startswith("000/validate/")
        assert any(i.startswith("001/bip_verify/") for i in ids)

    def test_nested_report_rejected(self, json_file):
        json_file("inner.json", {"experiments": []})
        config = json_file("batch.json", {"experiments": [
            {"command": "report", "paths": {"config": "inner.json"}}]})
        assert main(["report", "--config", config]) == EXIT_INPUT_ERROR

    def test_unknown_command_in_batch(self, json_file):
        config = json_file("batch.json", {"experiments": [{"command": "explode"}]})
        assert main(["report", "--config", config]) == EXIT_INPUT_ERROR
