from .core import (
    And,
    At,
    Atom,
    AtomNode,
    Box,
    Diamond,
    Formula,
    Implies,
    LarsError,
    Not,
    Or,
    PreconditionError,
    Stream,
    Structure,
    Timeline,
    Window,
    atom,
    entails,
    format_stream,
    is_substream,
    parse_atom,
    parse_stream,
    restrict,
    window_time,
)
from .solver import (
    CapacityError,
    Comparison,
    GroundProgram,
    LarsSyntaxError,
    Literal,
    Program,
    Rule,
    SafetyError,
    StratificationError,
    Var,
    answer_stream_stratified,
    answer_streams_bruteforce,
    check_model,
    ground,
    parse_program,
    reduct,
)
