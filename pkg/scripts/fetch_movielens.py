"""Fetch MovieLens-100K ratings into data/ml-100k/u.data.

Tries the GroupLens archive first; if that is unreachable, falls back to
the copy bundled in the RecBole wheel (downloaded with pip, not installed).
"""
import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
RECBOLE_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def from_grouplens(timeout=30) -> bytes:
    with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
        zf = zipfile.ZipFile(io.BytesIO(resp.read()))
    return zf.read("ml-100k/u.data")


def from_recbole() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
                        "recbole==1.2.1"], check=True)
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read(RECBOLE_MEMBER).decode()
    lines = text.splitlines()[1:]  # header: user_id:token item_id:token rating:float timestamp:float
    return ("\n".join("\t".join(l.split("\t")) for l in lines if l.strip()) + "\n").encode()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/ml-100k/u.data")
    args = ap.parse_args()
    out = Path(args.out)
    if out.exists():
        print(f"{out} already present")
        return
    try:
        data = from_grouplens()
    except OSError as exc:
        print(f"GroupLens unreachable ({exc}); using the RecBole copy")
        data = from_recbole()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    n = data.count(b"\n")
    print(f"wrote {out} ({n} ratings)")


if __name__ == "__main__":
    main()
