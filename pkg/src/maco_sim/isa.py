"""Matrix-assist instruction set: encodings, parameter blocks, assembler.

Instructions are 32-bit words living in the coprocessor opcode space:

    bits [31:24]  0xE0 + instruction index
    bits [23:16]  reserved, must be zero
    bits [15:8]   Rd
    bits [7:0]    Rn

The register file has 31 general registers R0..R30.  MA_MOVE / MA_INIT /
MA_STASH / MA_CFG consume a six-register parameter block starting at Rn, so
for those Rn+5 must still be a valid register.
"""

from dataclasses import dataclass

MA_MOVE = 0
MA_INIT = 1
MA_STASH = 2
MA_CFG = 3
MA_READ = 4
MA_STATE = 5
MA_CLEAR = 6

MNEMONICS = ["MA_MOVE", "MA_INIT", "MA_STASH", "MA_CFG",
             "MA_READ", "MA_STATE", "MA_CLEAR"]
OPCODE_BASE = 0xE0
NUM_REGS = 31
PARAM_BLOCK_LEN = 6
PARAM_CONSUMERS = (MA_MOVE, MA_INIT, MA_STASH, MA_CFG)

# precisions: (name, element size, simd ways packed per lane)
FP64 = 0
FP32 = 1
FP16 = 2
PRECISIONS = {FP64: ("fp64", 8, 1), FP32: ("fp32", 4, 2), FP16: ("fp16", 2, 4)}


def element_size(precision):
    return PRECISIONS[precision][1]


def simd_ways(precision):
    return PRECISIONS[precision][2]


def precision_name(precision):
    return PRECISIONS[precision][0]


def precision_code(name):
    for code, (pname, _, _) in PRECISIONS.items():
        if pname == name:
            return code
    raise KeyError(name)


class IsaError(Exception):
    pass


class UnknownOpcode(IsaError):
    pass


class NonzeroReservedBits(IsaError):
    pass


class InvalidRegister(IsaError):
    pass


class AsmError(IsaError):
    """Assembler diagnostics carry the 1-based source line."""

    def __init__(self, line_no, message):
        super().__init__("line %d: %s" % (line_no, message))
        self.line_no = line_no


class UnknownMnemonic(AsmError):
    pass


class BadOperand(AsmError):
    pass


class UndefinedRegisterUse(AsmError):
    pass


@dataclass(frozen=True)
class Instruction:
    op: int
    rd: int
    rn: int

    def __str__(self):
        if self.op == MA_CLEAR:
            return "%s R%d" % (MNEMONICS[self.op], self.rn)
        return "%s R%d, R%d" % (MNEMONICS[self.op], self.rd, self.rn)


def _check_regs(op, rd, rn):
    if not (0 <= rd < NUM_REGS):
        raise InvalidRegister("Rd=%d" % rd)
    if not (0 <= rn < NUM_REGS):
        raise InvalidRegister("Rn=%d" % rn)
    if op in PARAM_CONSUMERS and rn + PARAM_BLOCK_LEN - 1 >= NUM_REGS:
        raise InvalidRegister(
            "Rn=%d: parameter block R%d..R%d exceeds R30" %
            (rn, rn, rn + PARAM_BLOCK_LEN - 1))


def encode(instr):
    if not (0 <= instr.op <= MA_CLEAR):
        raise UnknownOpcode("op index %d" % instr.op)
    _check_regs(instr.op, instr.rd, instr.rn)
    return ((OPCODE_BASE + instr.op) << 24) | (instr.rd << 8) | instr.rn


def decode(word):
    opcode = (word >> 24) & 0xFF
    if not (OPCODE_BASE <= opcode <= OPCODE_BASE + MA_CLEAR):
        raise UnknownOpcode("0x%02X" % opcode)
    if (word >> 16) & 0xFF:
        raise NonzeroReservedBits("bits [23:16] = 0x%02X" % ((word >> 16) & 0xFF))
    rd = (word >> 8) & 0xFF
    rn = word & 0xFF
    op = opcode - OPCODE_BASE
    _check_regs(op, rd, rn)
    return Instruction(op, rd, rn)


# -- GEMM parameter block ---------------------------------------------------

@dataclass
class GemmParams:
    a_vaddr: int
    b_vaddr: int
    c_vaddr: int
    m: int
    n: int
    k: int
    precision: int
    accumulate: bool
    tr: int
    tc: int
    ttr: int
    ttc: int

    def pack(self):
        """Six 64-bit register values as laid out for MA_CFG."""
        r3 = (self.m << 32) | self.n
        r4 = (self.k << 32) | (self.precision << 28) | (int(self.accumulate) << 27)
        r5 = (self.tr << 48) | (self.tc << 32) | (self.ttr << 16) | self.ttc
        return [self.a_vaddr, self.b_vaddr, self.c_vaddr, r3, r4, r5]

    @classmethod
    def unpack(cls, regs):
        r3, r4, r5 = regs[3], regs[4], regs[5]
        return cls(
            a_vaddr=regs[0], b_vaddr=regs[1], c_vaddr=regs[2],
            m=(r3 >> 32) & 0xFFFFFFFF, n=r3 & 0xFFFFFFFF,
            k=(r4 >> 32) & 0xFFFFFFFF,
            precision=(r4 >> 28) & 0xF,
            accumulate=bool((r4 >> 27) & 1),
            tr=(r5 >> 48) & 0xFFFF, tc=(r5 >> 32) & 0xFFFF,
            ttr=(r5 >> 16) & 0xFFFF, ttc=r5 & 0xFFFF)

    def fault_reason(self):
        """Machine-independent validity check; None when well formed.

        Buffer-capacity checks need the engine's buffer size and strip depth
        and happen at configure time.
        """
        for name in ("a_vaddr", "b_vaddr", "c_vaddr"):
            if getattr(self, name) % 8 != 0:
                return "%s not 8-byte aligned" % name
        if self.precision not in PRECISIONS:
            return "unknown precision %d" % self.precision
        if min(self.m, self.n, self.k) < 1:
            return "degenerate dims %dx%dx%d" % (self.m, self.n, self.k)
        if min(self.tr, self.tc, self.ttr, self.ttc) < 1:
            return "degenerate tiling"
        if self.ttr > self.tr or self.ttc > self.tc:
            return "sub-tile %dx%d exceeds tile %dx%d" % (
                self.ttr, self.ttc, self.tr, self.tc)
        return None


@dataclass
class TransferParams:
    """Parameter block for MA_MOVE / MA_INIT / MA_STASH.

    dst is the region being written (or stashed); src_or_value is the source
    address for moves and the 64-bit fill pattern for init; byte_count is the
    transfer length.  The last three block registers are reserved.
    """
    dst: int
    src_or_value: int
    byte_count: int

    def pack(self):
        return [self.dst, self.src_or_value, self.byte_count, 0, 0, 0]

    @classmethod
    def unpack(cls, regs):
        return cls(dst=regs[0], src_or_value=regs[1], byte_count=regs[2])

    def fault_reason(self, kind):
        if self.dst % 8 != 0:
            return "dst not 8-byte aligned"
        if kind == MA_MOVE and self.src_or_value % 8 != 0:
            return "src not 8-byte aligned"
        if self.byte_count == 0 or self.byte_count % 8 != 0:
            return "byte count %d not a positive multiple of 8" % self.byte_count
        return None


def validate_params(op, regs):
    """Faults for a parameter block as seen by the given instruction.

    Returns None when acceptable, else a reason string.
    """
    if op == MA_CFG:
        return GemmParams.unpack(regs).fault_reason()
    if op in (MA_MOVE, MA_INIT, MA_STASH):
        return TransferParams.unpack(regs).fault_reason(op)
    return None


# -- assembler --------------------------------------------------------------

@dataclass(frozen=True)
class SetReg:
    reg: int
    value: int

    def __str__(self):
        return ".set R%d, 0x%X" % (self.reg, self.value)


@dataclass(frozen=True)
class Op:
    instr: Instruction
    poll: bool = False

    def __str__(self):
        if self.poll:
            return ".poll R%d, R%d" % (self.instr.rd, self.instr.rn)
        return str(self.instr)


class Program:
    """Ordered stream of instructions and register writes.

    `.set` directives take effect in stream order; directives ahead of the
    first instruction form the initial register file.  `.poll Rd, Rn` is an
    execution directive that repeats MA_READ Rd, Rn until the done bit of the
    returned status word is set.
    """

    def __init__(self, items):
        self.items = list(items)

    @property
    def instructions(self):
        return [it.instr for it in self.items if isinstance(it, Op)]

    @property
    def register_inits(self):
        return [(it.reg, it.value) for it in self.items if isinstance(it, SetReg)]

    def __eq__(self, other):
        return isinstance(other, Program) and self.items == other.items

    def __str__(self):
        return "\n".join(str(it) for it in self.items) + "\n"


def _parse_reg(tok, line_no):
    tok = tok.strip()
    if not tok.upper().startswith("R"):
        raise BadOperand(line_no, "expected register, got %r" % tok)
    try:
        idx = int(tok[1:])
    except ValueError:
        raise BadOperand(line_no, "bad register %r" % tok)
    if not (0 <= idx < NUM_REGS):
        raise BadOperand(line_no, "register R%d out of range (R0..R30)" % idx)
    return idx


def assemble(text):
    items = []
    lines = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        head_u = head.upper()
        if head_u == ".SET":
            parts = [p for p in rest.split(",") if p.strip()]
            if len(parts) != 2:
                raise BadOperand(line_no, ".set wants register, value")
            reg = _parse_reg(parts[0], line_no)
            try:
                value = int(parts[1].strip(), 0) & 0xFFFFFFFFFFFFFFFF
            except ValueError:
                raise BadOperand(line_no, "bad value %r" % parts[1].strip())
            items.append(SetReg(reg, value))
            lines.append(line_no)
            continue
        if head_u == ".POLL":
            parts = [p for p in rest.split(",") if p.strip()]
            if len(parts) != 2:
                raise BadOperand(line_no, ".poll wants Rd, Rn")
            rd = _parse_reg(parts[0], line_no)
            rn = _parse_reg(parts[1], line_no)
            items.append(Op(Instruction(MA_READ, rd, rn), poll=True))
            lines.append(line_no)
            continue
        if head_u not in MNEMONICS:
            raise UnknownMnemonic(line_no, "unknown mnemonic %r" % head)
        op = MNEMONICS.index(head_u)
        parts = [p for p in rest.split(",") if p.strip()]
        if op == MA_CLEAR:
            if len(parts) != 1:
                raise BadOperand(line_no, "MA_CLEAR wants a single register")
            rd, rn = 0, _parse_reg(parts[0], line_no)
        else:
            if len(parts) != 2:
                raise BadOperand(line_no, "%s wants Rd, Rn" % head_u)
            rd = _parse_reg(parts[0], line_no)
            rn = _parse_reg(parts[1], line_no)
        try:
            _check_regs(op, rd, rn)
        except InvalidRegister as exc:
            raise BadOperand(line_no, str(exc))
        items.append(Op(Instruction(op, rd, rn)))
        lines.append(line_no)

    # a parameter block register that is never written anywhere in the
    # program would be read as garbage; reject the program outright
    set_regs = {it.reg for it in items if isinstance(it, SetReg)}
    for it, line_no in zip(items, lines):
        if isinstance(it, Op) and it.instr.op in PARAM_CONSUMERS:
            rn = it.instr.rn
            missing = [r for r in range(rn, rn + PARAM_BLOCK_LEN)
                       if r not in set_regs]
            if missing:
                raise UndefinedRegisterUse(
                    line_no, "R%d read by %s parameter block but never set"
                    % (missing[0], MNEMONICS[it.instr.op]))
    return Program(items)


def print_program(program):
    return str(program)
