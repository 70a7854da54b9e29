"""Writes the NPY fixtures read by tests/npy_import.rs.

Element i (C order) of every fixture is ((i * 37) % 1001 - 500) / 64, which
is exact in float16/32/64 so the Rust side can compare bit-for-bit.
"""
import numpy as np


def pattern(shape, dtype):
    i = np.arange(int(np.prod(shape)), dtype=np.int64)
    return (((i * 37) % 1001 - 500) / 64.0).astype(dtype).reshape(shape)


def main():
    np.save("single_f32.npy", pattern((18, 512), "<f4"))
    np.save("batch_f32.npy", pattern((5, 18, 512), "<f4"))
    np.save("small_f64.npy", pattern((3, 4, 6), "<f8"))
    np.save("small_f64_be.npy", pattern((4, 6), ">f8"))
    with open("small_f32_v2.npy", "wb") as f:
        np.lib.format.write_array(f, pattern((2, 3, 5), "<f4"), version=(2, 0))
    np.save("half.npy", pattern((18, 512), "<f2"))
    np.save("fortran_f32.npy", np.asfortranarray(pattern((4, 6), "<f4")))


if __name__ == "__main__":
    main()
