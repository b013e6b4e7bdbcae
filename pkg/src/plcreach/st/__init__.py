"""Structured Text frontend: lexer, parser, built-in blocks, static checks."""

from .ast import (
    ArgBind,
    Assign,
    AssertTimeAnn,
    BinOp,
    CallExpr,
    CallStmt,
    DelayAnn,
    FieldRef,
    IfStmt,
    Lit,
    Pou,
    ReturnStmt,
    UnOp,
    VarDecl,
    VarRef,
    WhileStmt,
    expr_to_st,
    pou_to_st,
)
from .builtins import INTRINSIC_NAMES, builtin_pous
from .elaborate import BASE_TYPES, ElabError, PouTable
from .lexer import LexError, tokenize
from .parser import ParseError, parse_expression, parse_file

__all__ = [
    "ArgBind",
    "Assign",
    "AssertTimeAnn",
    "BASE_TYPES",
    "BinOp",
    "CallExpr",
    "CallStmt",
    "DelayAnn",
    "ElabError",
    "FieldRef",
    "IfStmt",
    "INTRINSIC_NAMES",
    "LexError",
    "Lit",
    "ParseError",
    "Pou",
    "PouTable",
    "ReturnStmt",
    "UnOp",
    "VarDecl",
    "VarRef",
    "WhileStmt",
    "builtin_pous",
    "expr_to_st",
    "parse_expression",
    "parse_file",
    "pou_to_st",
    "tokenize",
]
