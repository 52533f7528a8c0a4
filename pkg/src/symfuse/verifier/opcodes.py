"""Numeric tags and instruction opcodes shared by the engine backends.

The compiled backend mirrors these values; a test pins them against each
other so the two implementations can never drift apart.
"""

TAG_VAR, TAG_DIM, TAG_PAR, TAG_RAT = 0, 1, 2, 3
TAG_MATMUL, TAG_SUM, TAG_ADD, TAG_MUL, TAG_DIV = 4, 5, 6, 7, 8
TAG_EXP, TAG_SILU, TAG_SQUARE, TAG_SQRT, TAG_SCALE = 9, 10, 11, 12, 13
TAG_PART, TAG_COMB, TAG_RED, TAG_REPL = 14, 15, 16, 17
NTAGS = 18

LEAF_TAGS = frozenset((TAG_VAR, TAG_DIM, TAG_PAR, TAG_RAT))

TAG_OF_NAME = {
    "var": TAG_VAR, "dim": TAG_DIM, "par": TAG_PAR, "rat": TAG_RAT,
    "matmul": TAG_MATMUL, "sum": TAG_SUM, "add": TAG_ADD, "mul": TAG_MUL,
    "div": TAG_DIV, "exp": TAG_EXP, "silu": TAG_SILU, "square": TAG_SQUARE,
    "sqrt": TAG_SQRT, "scale": TAG_SCALE, "part": TAG_PART, "comb": TAG_COMB,
    "red": TAG_RED, "repl": TAG_REPL,
}
NAME_OF_TAG = {v: k for k, v in TAG_OF_NAME.items()}

ARITY = {
    TAG_VAR: 0, TAG_DIM: 0, TAG_PAR: 0, TAG_RAT: 0,
    TAG_MATMUL: 2, TAG_SUM: 2, TAG_ADD: 2, TAG_MUL: 2, TAG_DIV: 2,
    TAG_EXP: 1, TAG_SILU: 1, TAG_SQUARE: 1, TAG_SQRT: 1, TAG_SCALE: 2,
    TAG_PART: 3, TAG_COMB: 3, TAG_RED: 2, TAG_REPL: 2,
}

# Match-program instructions.
(
    I_BIND,
    I_COMPARE,
    I_DISTINCT,
    I_PAYLOAD_GE,
    I_PAYLOAD_LT,
    I_INVARIANT,
    I_SIZE1,
    I_ISLEAF,
    I_INVARIANT_LIT,
) = range(9)

# Sources for right-hand-side construction.
SRC_TMP, SRC_REG, SRC_CLS = 0, 1, 2
