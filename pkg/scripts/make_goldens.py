"""Regenerate the golden pipeline artifacts under data/golden/."""
import pathlib
import shutil
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "data" / "golden"


def main():
    if GOLDEN.exists():
        shutil.rmtree(GOLDEN)
    proc = subprocess.run(
        [sys.executable, "-m", "semfuzz.cli", "pipeline",
         "--config", "configs/replay.json", "--out", str(GOLDEN)],
        cwd=ROOT, env={"PYTHONPATH": str(ROOT / "src"), "PATH": "/usr/bin:/bin"},
        capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    sys.stderr.write(proc.stderr)
    if proc.returncode != 0:
        sys.exit(proc.returncode)
    for f in sorted(GOLDEN.rglob("*")):
        if f.is_file():
            print(f.relative_to(ROOT), f.stat().st_size)


if __name__ == "__main__":
    main()
