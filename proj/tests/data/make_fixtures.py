"""Regenerates the reference NPY fixtures used by the tensor IO tests."""
import numpy as np

np.save("zeros_2x2.npy", np.zeros((2, 2)))
np.save("arange_3x4x5.npy", np.arange(60, dtype=np.float64).reshape(3, 4, 5))
np.save("float32_2x3.npy", np.array([[0.5, 1.5, -2.0], [3.25, 0.0, 7.0]], dtype=np.float32))
np.save("int64_2x3.npy", np.array([[0, 1, 2], [2, 1, 0]], dtype=np.int64))
np.save("rank4.npy", np.zeros((1, 1, 1, 1)))
np.save("nan_2x2.npy", np.array([[0.0, np.nan], [1.0, 2.0]]))
np.save("fortran_2x3.npy", np.asfortranarray(np.arange(6, dtype=np.float64).reshape(2, 3)))
np.save("big_endian_2x2.npy", np.arange(4, dtype=">f8").reshape(2, 2))
np.save("one_zero_1x1x1.npy", np.zeros((1, 1, 1)))
