"""Show the two forecaster input encodings: hashed text features and the
Fourier temperature encoding.

Run:  python3 demos/02_features_and_encoding.py
"""

import numpy as np

from calibrag.corpus import Document
from calibrag.features import ExtractorConfig, extract
from calibrag.forecaster import FourierSpec, encode_temperature


def main():
    cfg = ExtractorConfig(dimension=64)
    doc = Document("d1", "Basalt", "basalt is a dark volcanic rock")
    vec = extract(cfg, "volcanic rock", doc)
    print(f"hashed features: dimension={vec.shape[0]}, nonzero={np.count_nonzero(vec)}")
    print(f"unit norm: {np.linalg.norm(vec):.12f}")
    print(f"first nonzero buckets: {np.flatnonzero(vec)[:6].tolist()}\n")

    # the same pair always lands in the same buckets
    again = extract(cfg, "volcanic rock", doc)
    print(f"deterministic: {np.array_equal(vec, again)}\n")

    spec = FourierSpec()  # 6 frequencies over [1, 2]
    print("temperature encoding (sin/cos interleaved):")
    for t in (1.0, 1.25, 1.5, 2.0):
        values = encode_temperature(spec, t)
        rendered = ", ".join(f"{v:+.3f}" for v in values[:6])
        print(f"  t={t:.2f}  [{rendered}, ...]")
    print("\nat t = t_min every sine is 0 and every cosine is 1,")
    print("so the encoding there is [0, 1] repeated:")
    print(f"  {np.round(encode_temperature(spec, spec.t_min), 12).tolist()}")


if __name__ == "__main__":
    main()
