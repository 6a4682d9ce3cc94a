from ccqm.moebius import GeneratorSet, IntMatrix2

# The two standard Dehn twists acting on slopes.
DEFAULT_GENERATORS = GeneratorSet.from_dict(
    {
        "R": IntMatrix2(1, 1, 0, 1),
        "L": IntMatrix2(1, 0, 1, 1),
    },
    names={
        "R": "right twist",
        "L": "left twist",
    },
)

MODEL_KINDS = ("farey", "tree")

DEFAULT_SCHEDULES = {
    "farey": (8, 16, 32, 64),
    "tree": (64, 128, 256, 512, 1024),
}

FALLBACK_EXPERIMENT = {
    "phi": "R",
    "psi": "L",
    "max_power": "64",
    "family": "2 3 4 5; 6 7 8 9; 10 11 12 13",
    "basepoint": "",
    "omega": "",
    "omega_words": "",
    "composite_power": "2",
    "weight": "1",
    "halfwidth": "1",
    "disk_generators": "R",
    "disk_basepoint": "",
    "disk_cap": "6",
    "stabilizer": "L",
    "boundary": "1",
    "samples": "300",
    "sample_length": "8",
    "growth_max_power": "64",
    "cyclic_max": "20",
    "coset_samples": "100",
    "coset_length": "6",
    "subgroup_length": "6",
    "cyclic_subgroups": "",
    "coefficients": "",
    "word": "R L",
}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2
