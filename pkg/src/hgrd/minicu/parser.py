"""Recursive-descent parser for MiniCU."""

from __future__ import annotations

import itertools

from hgrd.errors import NonConstantDivisor, ParseError
from hgrd.minicu.ast import (
    AXES,
    BUILTINS,
    Alloc,
    ArrayLoad,
    ArrayStore,
    Assert,
    Assign,
    AtomicOp,
    Barrier,
    Binary,
    Builtin,
    Call,
    Expr,
    Fence,
    For,
    FunctionDecl,
    If,
    Input,
    IntLit,
    KernelDecl,
    Launch,
    Param,
    Program,
    Return,
    SourceLoc,
    Stmt,
    VarRef,
)
from hgrd.minicu.lexer import KEYWORDS, Token, tokenize

# binary operator -> precedence (higher binds tighter)
PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "+": 5,
    "-": 5,
    "*": 6,
    "/": 6,
    "%": 6,
}

ATOMICS = {
    "atomicCAS": ("CAS", "device", 2),
    "atomicExch": ("Exch", "device", 1),
    "atomicAdd": ("Add", "device", 1),
    "atomicCAS_block": ("CAS", "block", 2),
    "atomicExch_block": ("Exch", "block", 1),
    "atomicAdd_block": ("Add", "block", 1),
}
BARRIERS = {"__syncthreads": "syncthreads", "__syncwarp": "syncwarp"}
FENCES = {"__threadfence": "device", "__threadfence_block": "block"}
ALLOCS = {"cudaMalloc": ("malloc", 1), "cudaMallocPitch": ("mallocPitch", 2)}
INTRINSICS = frozenset({*ATOMICS, *BARRIERS, *FENCES, *ALLOCS, "__input", "assert"})


class Parser:
    def __init__(self, source: str, file: str) -> None:
        self.file = file
        self.tokens = tokenize(source, file)
        self.pos = 0
        self._sids = itertools.count()
        self.in_kernel = False

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "id") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected '{text}', found {self.describe(self.tok)}")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error(f"expected identifier, found {self.describe(t)}")
        return self.advance()

    @staticmethod
    def describe(t: Token) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def error(self, message: str, loc: SourceLoc | None = None) -> None:
        raise ParseError(message, loc or self.tok.loc)

    def sid(self) -> int:
        return next(self._sids)

    # -- declarations ----------------------------------------------------

    def parse_program(self, source: str) -> Program:
        kernels: list[KernelDecl] = []
        functions: list[FunctionDecl] = []
        while self.tok.kind != "eof":
            if self.at("__global__"):
                kernels.append(self.parse_kernel())
            else:
                functions.append(self.parse_function())
        return Program(self.file, tuple(functions), tuple(kernels), "main", source=source)

    def parse_kernel(self) -> KernelDecl:
        start = self.expect("__global__").loc
        self.expect("void")
        name = self.ident().text
        params = self.parse_params()
        self.in_kernel = True
        body = self.parse_block()
        self.in_kernel = False
        return KernelDecl(name, params, body, loc=start)

    def parse_function(self) -> FunctionDecl:
        start = self.tok.loc
        if self.at("void") or self.at("int"):
            ret = self.advance().text
        else:
            self.error(f"expected a function or kernel declaration, found {self.describe(self.tok)}")
        name = self.ident().text
        params = self.parse_params()
        body = self.parse_block()
        return FunctionDecl(name, params, body, ret, loc=start)

    def parse_params(self) -> tuple[Param, ...]:
        self.expect("(")
        params: list[Param] = []
        if self.at("void") and self.peek().text == ")":
            self.advance()
        if not self.at(")"):
            while True:
                loc = self.tok.loc
                ptype = self.parse_type(allow_scalar_float=False)
                name = self.ident().text
                params.append(Param(name, ptype, loc=loc))
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(params)

    def parse_type(self, allow_scalar_float: bool = True) -> str:
        if not (self.at("int") or self.at("float") or self.at("lock")):
            self.error(f"expected a type, found {self.describe(self.tok)}")
        base = self.advance().text
        if self.accept("*"):
            return base + "*"
        if base == "lock" or (base == "float" and not allow_scalar_float):
            self.error(f"type '{base}' must be an array ('{base} *')")
        return base

    # -- statements ------------------------------------------------------

    def parse_block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        stmts: list[Stmt] = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unterminated block")
            stmts.extend(self.parse_stmt())
        self.expect("}")
        return tuple(stmts)

    def parse_body(self) -> tuple[Stmt, ...]:
        if self.at("{"):
            return self.parse_block()
        return tuple(self.parse_stmt())

    def parse_stmt(self) -> list[Stmt]:
        t = self.tok
        if t.kind != "id":
            self.error(f"expected a statement, found {self.describe(t)}")
        if t.text == "if":
            return [self.parse_if()]
        if t.text == "for":
            return [self.parse_for()]
        if t.text == "return":
            self.advance()
            if not self.at(";"):
                if self.in_kernel:
                    self.error("kernels cannot return a value")
                self.parse_expr()
            self.expect(";")
            return [Return(loc=t.loc, sid=self.sid())]
        if t.text == "assert":
            if self.in_kernel:
                self.error("assert is only allowed in host code")
            self.advance()
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return [Assert(cond, loc=t.loc, sid=self.sid())]
        if t.text in ("int", "float", "lock"):
            return self.parse_decl()
        if t.text in KEYWORDS:
            self.error(f"unexpected keyword {t.text!r}")
        nxt = self.peek()
        if nxt.text == "<<<":
            return [self.parse_launch()]
        if nxt.text == "(":
            return [self.parse_call_stmt()]
        if nxt.text == "[":
            return [self.parse_store()]
        if nxt.text in ("=", "++", "+=", "-="):
            stmt = self.parse_simple_assign()
            self.expect(";")
            return [stmt]
        self.error(f"expected a statement, found {self.describe(t)}")
        raise AssertionError("unreachable")

    def parse_decl(self) -> list[Stmt]:
        loc = self.tok.loc
        base = self.advance().text
        out: list[Stmt] = []
        while True:
            dloc = self.tok.loc if out else loc
            is_array = self.accept("*")
            if base == "lock" and not is_array:
                self.error("lock variables must be arrays ('lock *')")
            name_tok = self.ident()
            dtype = base + "*" if is_array else base
            if is_array:
                if self.in_kernel:
                    self.error("arrays can only be declared in host code or as kernel parameters")
                out.append(Assign(name_tok.text, None, dtype, loc=dloc, sid=self.sid()))
            elif self.accept("="):
                if self.tok.kind == "id" and self.tok.text in ATOMICS:
                    out.append(self.parse_atomic(target=name_tok.text, decl=dtype, loc=dloc))
                else:
                    value = self.parse_expr()
                    out.append(Assign(name_tok.text, value, dtype, loc=dloc, sid=self.sid()))
            else:
                out.append(Assign(name_tok.text, None, dtype, loc=dloc, sid=self.sid()))
            if not self.accept(","):
                break
        self.expect(";")
        return out

    def parse_simple_assign(self, loop_var: str | None = None) -> Assign | AtomicOp:
        name_tok = self.ident()
        name = name_tok.text
        loc = name_tok.loc
        if loop_var is not None and name != loop_var:
            self.error(f"loop step must update the loop variable '{loop_var}'", loc)
        if self.accept("++"):
            value: Expr = Binary("+", VarRef(name, loc=loc), IntLit(1, loc=loc), loc=loc)
        elif self.at("+=") or self.at("-="):
            op = self.advance().text[0]
            rhs = self.parse_expr()
            value = Binary(op, VarRef(name, loc=loc), rhs, loc=loc)
        else:
            self.expect("=")
            if loop_var is None and self.tok.kind == "id" and self.tok.text in ATOMICS:
                return self.parse_atomic(target=name, decl=None, loc=loc)
            value = self.parse_expr()
        return Assign(name, value, None, loc=loc, sid=self.sid())

    def parse_if(self) -> If:
        loc = self.expect("if").loc
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        then = self.parse_body()
        orelse = None
        if self.accept("else"):
            orelse = self.parse_body()
        return If(cond, then, orelse, loc=loc, sid=self.sid())

    def parse_for(self) -> For:
        loc = self.expect("for").loc
        self.expect("(")
        decl = False
        if self.at("int"):
            self.advance()
            decl = True
        var = self.ident().text
        self.expect("=")
        init = self.parse_expr()
        self.expect(";")
        cond = self.parse_expr()
        self.expect(";")
        step_stmt = self.parse_simple_assign(loop_var=var)
        assert isinstance(step_stmt, Assign) and step_stmt.value is not None
        self.expect(")")
        body = self.parse_body()
        return For(var, init, cond, step_stmt.value, body, decl, loc=loc, sid=self.sid())

    def parse_store(self) -> ArrayStore:
        name_tok = self.ident()
        self.expect("[")
        index = self.parse_expr()
        self.expect("]")
        self.expect("=")
        value = self.parse_expr()
        self.expect(";")
        return ArrayStore(name_tok.text, index, value, loc=name_tok.loc, sid=self.sid())

    def parse_launch(self) -> Launch:
        name_tok = self.ident()
        if self.in_kernel:
            self.error("kernel launches are only allowed in host code", name_tok.loc)
        self.expect("<<<")
        grid = self.parse_dims()
        self.expect(",")
        block = self.parse_dims()
        self.expect(">>>")
        args = self.parse_args()
        self.expect(";")
        return Launch(name_tok.text, grid, block, args, loc=name_tok.loc, sid=self.sid())

    def parse_dims(self) -> tuple[Expr, Expr, Expr]:
        if self.at("("):
            lparen = self.advance()
            items = [self.parse_expr()]
            while self.accept(","):
                items.append(self.parse_expr())
            self.expect(")")
            if len(items) == 1:
                # a parenthesized scalar, possibly followed by more operators
                first = self.continue_binary(items[0], 0)
                return (first, IntLit(1, loc=lparen.loc), IntLit(1, loc=lparen.loc))
            if len(items) > 3:
                self.error("launch dimensions take at most three components", lparen.loc)
            while len(items) < 3:
                items.append(IntLit(1, loc=lparen.loc))
            return (items[0], items[1], items[2])
        loc = self.tok.loc
        # '>' cannot appear unparenthesized inside '<<<...>>>'
        e = self.parse_expr(stop_at_gt=True)
        return (e, IntLit(1, loc=loc), IntLit(1, loc=loc))

    def parse_args(self) -> tuple[Expr, ...]:
        self.expect("(")
        args: list[Expr] = []
        if not self.at(")"):
            while True:
                self.accept("&")
                args.append(self.parse_expr())
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(args)

    def parse_call_stmt(self) -> Stmt:
        name_tok = self.tok
        name = name_tok.text
        loc = name_tok.loc
        if name in ATOMICS:
            stmt = self.parse_atomic(target=None, decl=None, loc=loc)
            self.expect(";")
            return stmt
        if name in BARRIERS or name in FENCES:
            if not self.in_kernel:
                self.error(f"'{name}' is only allowed in kernels", loc)
            self.advance()
            self.expect("(")
            self.expect(")")
            self.expect(";")
            if name in BARRIERS:
                return Barrier(BARRIERS[name], loc=loc, sid=self.sid())
            return Fence(FENCES[name], loc=loc, sid=self.sid())
        if name in ALLOCS:
            return self.parse_alloc()
        if name == "__input":
            self.error("__input() must be used as an expression", loc)
        self.advance()
        if self.in_kernel:
            self.error("function calls are not allowed inside kernels", loc)
        args = self.parse_args()
        self.expect(";")
        return Call(name, args, loc=loc, sid=self.sid())

    def parse_atomic(self, target: str | None, decl: str | None, loc: SourceLoc) -> AtomicOp:
        name_tok = self.advance()
        if not self.in_kernel:
            self.error(f"'{name_tok.text}' is only allowed in kernels", name_tok.loc)
        op, scope, n_operands = ATOMICS[name_tok.text]
        self.expect("(")
        self.accept("&")
        arr_tok = self.ident()
        self.expect("[")
        index = self.parse_expr()
        self.expect("]")
        operands: list[Expr] = []
        for _ in range(n_operands):
            self.expect(",")
            operands.append(self.parse_expr())
        self.expect(")")
        return AtomicOp(
            op,
            scope,
            arr_tok.text,
            index,
            tuple(operands),
            target,
            decl,
            loc=name_tok.loc if target is None else loc,
            array_loc=arr_tok.loc,
            sid=self.sid(),
        )

    def parse_alloc(self) -> Alloc:
        name_tok = self.advance()
        if self.in_kernel:
            self.error(f"'{name_tok.text}' is only allowed in host code", name_tok.loc)
        kind, n_sizes = ALLOCS[name_tok.text]
        self.expect("(")
        self.accept("&")
        array = self.ident().text
        pitch = None
        if kind == "mallocPitch":
            self.expect(",")
            self.accept("&")
            pitch = self.ident().text
        args: list[Expr] = []
        for _ in range(n_sizes):
            self.expect(",")
            args.append(self.parse_expr())
        self.expect(")")
        self.expect(";")
        return Alloc(kind, array, tuple(args), pitch, loc=name_tok.loc, sid=self.sid())

    # -- expressions -----------------------------------------------------

    def parse_expr(self, min_prec: int = 0, stop_at_gt: bool = False) -> Expr:
        left = self.parse_unary()
        return self.continue_binary(left, min_prec, stop_at_gt)

    def continue_binary(self, left: Expr, min_prec: int, stop_at_gt: bool = False) -> Expr:
        while True:
            t = self.tok
            if t.kind != "op" or t.text not in PRECEDENCE:
                return left
            if stop_at_gt and t.text in (">", ">="):
                return left
            prec = PRECEDENCE[t.text]
            if prec <= min_prec:
                return left
            self.advance()
            right = self.parse_expr(prec, stop_at_gt)
            if t.text in ("/", "%") and not (isinstance(right, IntLit) and right.value > 0):
                raise NonConstantDivisor(t.loc)
            left = Binary(t.text, left, right, loc=t.loc)

    def parse_unary(self) -> Expr:
        t = self.tok
        if self.accept("-"):
            operand = self.parse_unary()
            if isinstance(operand, IntLit):
                return IntLit(-operand.value, loc=t.loc)
            return Binary("-", IntLit(0, loc=t.loc), operand, loc=t.loc)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text), loc=t.loc)
        if t.kind == "id":
            if t.text in BUILTINS:
                self.advance()
                self.expect(".")
                axis_tok = self.ident()
                if axis_tok.text not in AXES:
                    self.error(f"unknown axis '{axis_tok.text}'", axis_tok.loc)
                return Builtin(t.text, axis_tok.text, loc=t.loc)
            if t.text == "__input":
                self.advance()
                self.expect("(")
                self.expect(")")
                return Input(loc=t.loc)
            if t.text in INTRINSICS:
                self.error(f"'{t.text}' cannot be used inside an expression")
            name_tok = self.ident()
            if self.accept("["):
                index = self.parse_expr()
                self.expect("]")
                return ArrayLoad(name_tok.text, index, loc=name_tok.loc)
            if self.at("("):
                self.error("function calls cannot appear inside expressions")
            return VarRef(name_tok.text, loc=name_tok.loc)
        self.error(f"expected an expression, found {self.describe(t)}")
        raise AssertionError("unreachable")


def parse_syntax(source: str, file: str = "<input>") -> Program:
    """Parse without symbol resolution."""
    parser = Parser(source, file)
    return parser.parse_program(source)
