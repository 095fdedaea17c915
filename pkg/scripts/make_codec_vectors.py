"""Regenerate src/rpredict/data/codec_vectors.json from a standalone oracle.

The oracle builds codewords by repeated halving rather than bit_length, so it
shares no code with rpredict.codec.
"""
import json
import pathlib

# standard Elias delta table for 1..17
PUBLISHED = {
    1: "1", 2: "0100", 3: "0101", 4: "01100", 5: "01101", 6: "01110",
    7: "01111", 8: "00100000", 9: "00100001", 10: "00100010",
    11: "00100011", 12: "00100100", 13: "00100101", 14: "00100110",
    15: "00100111", 16: "001010000", 17: "001010001",
}


def floor_log2(k):
    n = 0
    while k > 1:
        k //= 2
        n += 1
    return n


def oracle(k):
    n = floor_log2(k)
    length = n + 1
    prefix = "0" * floor_log2(length) + format(length, "b")
    rest = format(k - 2 ** n, f"0{n}b") if n else ""
    return prefix + rest


def main():
    for k, word in PUBLISHED.items():
        assert oracle(k) == word, (k, oracle(k), word)
    ks = list(range(1, 33)) + [63, 64, 65, 100, 127, 128, 255, 256, 1000, 1023,
                               1024, 4095, 65535, 65536, 10 ** 6, 2 ** 31 - 1,
                               2 ** 32, 2 ** 40 + 12345, 2 ** 62 + 1]
    vectors = [{"k": k, "bits": oracle(k), "length": len(oracle(k))} for k in ks]
    out = pathlib.Path(__file__).resolve().parents[1] / "src/rpredict/data/codec_vectors.json"
    out.write_text(json.dumps({"code": "elias-delta", "bit_order": "msb-first",
                               "vectors": vectors}, indent=1) + "\n")
    print(f"wrote {len(vectors)} vectors to {out}")


if __name__ == "__main__":
    main()
