#!/usr/bin/env python3
# Copyright 2026 The debater Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Materialize MovieLens-100K ``u.data`` (tab-separated user/item/rating/epoch).

The GroupLens mirror is not always reachable, so this pulls the copy that ships
inside the ``pytorch-widedeep`` wheel from PyPI and writes it in the original
``u.data`` layout, in the original row order.
"""
import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k/u.data")
    parser.add_argument("--wheel", help="use an already-downloaded wheel")
    args = parser.parse_args()

    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "pytorch-widedeep==1.7.0",
                 "--no-deps", "-d", tmp, "-q"],
                check=True)
            wheel = next(pathlib.Path(tmp).glob("pytorch_widedeep-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            df = pd.read_parquet(io.BytesIO(z.read(MEMBER)))

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    df.to_csv(out, sep="\t", header=False, index=False)
    print(f"wrote {len(df)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
