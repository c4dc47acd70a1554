import os

# keep BLAS single threaded: the layer matrices here are small enough that
# thread fan-out costs more than it buys, and a fixed reduction order keeps
# runs bitwise reproducible
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

try:  # the env vars are ignored if numpy was already loaded by a plugin
    import threadpoolctl

    threadpoolctl.threadpool_limits(1, "blas")
except ImportError:
    pass
