"""Tiny end-to-end run through the Python bindings."""
import tempfile
from pathlib import Path

import jcif


def main():
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "data"
        sizes = jcif.generate_dataset(str(data), 40, seed=1, size=16)
        assert sum(sizes.values()) == 40, sizes

        model = jcif.Model.train_codec(str(data), steps=3, batch=4)
        model = model.train_hashing(str(data), steps=2, bits=16, batch=4)
        assert model.stage == 2 and model.code_bits == 16

        ckpt = Path(tmp) / "m.ckpt"
        model.save(str(ckpt))
        model = jcif.Model.load(str(ckpt))

        archive = model.compress(str(data))
        assert len(archive) == sizes["test"]
        ids = archive.ids()
        pixels, shape = archive.decompress(model, ids[0])
        assert shape == (16, 16, 3) and len(pixels) == 16 * 16 * 3

        table = archive.index()
        hits = table.query(archive.code(ids[0]), top_k=3)
        assert hits[0][1] == 0 and len(hits) <= 3
        assert jcif.HashTable.from_bytes(table.to_bytes()).to_bytes() == table.to_bytes()

        code = model.hash(pixels, shape)
        assert len(code) == 16 and set(code) <= {-1, 1}

        res = model.evaluate(str(data), archive, k=5)
        assert res["joint"][4] == 0 and res["standard"][4] == len(archive)

    combined, alpha = jcif.mgda_combine([1.0, 0.0], [0.0, 1.0])
    assert abs(alpha - 0.5) < 1e-12 and combined == [0.5, 0.5]
    assert jcif.average_precision([True, False, True]) == (1 + 2 / 3) / 2
    assert jcif.average_precision([False]) is None
    assert jcif.hamming([1, -1, 1], [1, 1, -1]) == 2
    print("python smoke test ok")


if __name__ == "__main__":
    main()
