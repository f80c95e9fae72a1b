import json

from rdtrack import health


def test_health_reports_every_check(monkeypatch, tmp_path):
    monkeypatch.setenv("RDTRACK_OUT", str(tmp_path / "out"))

    result = health.check_system_health()

    assert set(result) == {"status", "timestamp", "checks"}
    assert result["checks"]["output_writable"]["status"] == "pass"
    for name, _ in health.REQUIRED_PACKAGES:
        assert f"package_{name}" in result["checks"]
    assert not list((tmp_path / "out").iterdir())


def test_health_fails_when_output_root_is_a_file(monkeypatch, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    monkeypatch.setenv("RDTRACK_OUT", str(blocker))

    result = health.check_system_health()

    assert result["status"] == "unhealthy"
    assert result["checks"]["output_writable"]["status"] == "fail"


def test_package_version_comparison(monkeypatch):
    monkeypatch.setattr(health.metadata, "version", lambda name: "1.0")

    check = health._check_package("numpy", "1.24")

    assert check["status"] == "fail"
    assert "need >=1.24" in check["message"]


def test_health_handler_prints_json(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("RDTRACK_OUT", str(tmp_path))

    code = health.health_check_handler()
    payload = json.loads(capsys.readouterr().out)

    assert code == (0 if payload["status"] == "healthy" else 1)


def test_health_text_output(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("RDTRACK_OUT", str(tmp_path))

    health.print_health_status()

    out = capsys.readouterr().out
    assert "rdtrack health check" in out
    assert "output_writable" in out
