//! Line-oriented test script parser.
//!
//! One step per line, `#` starts a comment, tokens are whitespace-split:
//!
//! ```text
//! pv <NAME> <args...>      # hypercall by catalogue name
//! hwfv <REASON> <args...>  # trap by catalogue name
//! inject <kind> <args...>  # crash | mem_corrupt a v | reg_corrupt i v | leak n
//! wait <ticks>
//! greedy <extra_ticks>
//! dev <busy|idle>
//! ```
//!
//! Numbers are decimal or `0x`-prefixed hex. The parser resolves names and
//! literal shapes; argument *semantics* (arity and domains of pv/hwfv
//! calls) are judged by the dispatcher at run time, so deliberately odd
//! calls can be written by hand.

use thiserror::Error;

use super::{FaultSpec, Step, TestCase, Technique};
use crate::surface::{SurfaceKind, HWFV_CATALOG, PV_CATALOG};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("script parse error at line {line}, column {column}: {reason}")]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based character column of the offending token.
    pub column: usize,
    pub reason: String,
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &line[s..i], column: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        let end = line.find('#').unwrap_or(line.len());
        out.push(Token { text: line[s..end].trim_end(), column: s + 1 });
    }
    out
}

fn parse_num(tok: &Token<'_>, line: usize) -> Result<u64, ParseError> {
    let t = tok.text;
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|_| ParseError {
        line,
        column: tok.column,
        reason: format!("expected a number, found {t:?}"),
    })
}

fn parse_nums(toks: &[Token<'_>], line: usize) -> Result<Vec<u64>, ParseError> {
    toks.iter().map(|t| parse_num(t, line)).collect()
}

fn expect_args(
    toks: &[Token<'_>],
    want: usize,
    line: usize,
    what: &str,
    after: &Token<'_>,
) -> Result<(), ParseError> {
    if toks.len() != want {
        return Err(ParseError {
            line,
            column: toks.get(want.min(toks.len().saturating_sub(1))).map_or(
                after.column + after.text.len() + 1,
                |t| t.column,
            ),
            reason: format!("{what} takes {want} argument(s), found {}", toks.len()),
        });
    }
    Ok(())
}

fn parse_line(lineno: usize, line: &str) -> Result<Option<Step>, ParseError> {
    let toks = tokenize(line);
    let Some(head) = toks.first() else { return Ok(None) };
    let rest = &toks[1..];
    let step = match head.text {
        "pv" | "hwfv" => {
            let surface = if head.text == "pv" { SurfaceKind::Pv } else { SurfaceKind::Hwfv };
            let catalog: &[_] = match surface {
                SurfaceKind::Pv => &PV_CATALOG,
                SurfaceKind::Hwfv => &HWFV_CATALOG,
            };
            let name = rest.first().ok_or_else(|| ParseError {
                line: lineno,
                column: head.column + head.text.len() + 1,
                reason: format!("missing call name after {:?}", head.text),
            })?;
            let entry = catalog.iter().find(|e| e.name == name.text).ok_or_else(|| {
                ParseError {
                    line: lineno,
                    column: name.column,
                    reason: format!("unknown {} call {:?}", surface.name(), name.text),
                }
            })?;
            let args = parse_nums(&rest[1..], lineno)?;
            match surface {
                SurfaceKind::Pv => Step::PvCall { id: entry.id, args },
                SurfaceKind::Hwfv => Step::HwfvTrap { reason: entry.id, payload: args },
            }
        }
        "inject" => {
            let kind = rest.first().ok_or_else(|| ParseError {
                line: lineno,
                column: head.column + head.text.len() + 1,
                reason: "missing fault kind after \"inject\"".into(),
            })?;
            let params = &rest[1..];
            let fault = match kind.text {
                "crash" => {
                    expect_args(params, 0, lineno, "inject crash", kind)?;
                    FaultSpec::Crash
                }
                "mem_corrupt" => {
                    expect_args(params, 2, lineno, "inject mem_corrupt", kind)?;
                    let v = parse_nums(params, lineno)?;
                    FaultSpec::MemCorrupt { addr: v[0], val: v[1] }
                }
                "reg_corrupt" => {
                    expect_args(params, 2, lineno, "inject reg_corrupt", kind)?;
                    let v = parse_nums(params, lineno)?;
                    if v[0] > 7 {
                        return Err(ParseError {
                            line: lineno,
                            column: params[0].column,
                            reason: format!("register index {} out of range 0..8", v[0]),
                        });
                    }
                    FaultSpec::RegCorrupt { idx: v[0] as u8, val: v[1] }
                }
                "leak" => {
                    expect_args(params, 1, lineno, "inject leak", kind)?;
                    FaultSpec::Leak { bytes_per_frame: parse_num(&params[0], lineno)? }
                }
                other => {
                    return Err(ParseError {
                        line: lineno,
                        column: kind.column,
                        reason: format!("unknown fault kind {other:?}"),
                    })
                }
            };
            Step::InjectFault { fault }
        }
        "wait" => {
            expect_args(rest, 1, lineno, "wait", head)?;
            Step::Wait { ticks: parse_num(&rest[0], lineno)? }
        }
        "greedy" => {
            expect_args(rest, 1, lineno, "greedy", head)?;
            Step::SetGreedy { extra: parse_num(&rest[0], lineno)? }
        }
        "dev" => {
            expect_args(rest, 1, lineno, "dev", head)?;
            match rest[0].text {
                "busy" => Step::DevPulse { busy: true },
                "idle" => Step::DevPulse { busy: false },
                other => {
                    return Err(ParseError {
                        line: lineno,
                        column: rest[0].column,
                        reason: format!("dev expects busy or idle, found {other:?}"),
                    })
                }
            }
        }
        other => {
            return Err(ParseError {
                line: lineno,
                column: head.column,
                reason: format!("unknown directive {other:?}"),
            })
        }
    };
    Ok(Some(step))
}

/// Parse a whole script into a single scripted test case.
pub fn parse_script(text: &str) -> Result<TestCase, ParseError> {
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(step) = parse_line(i + 1, line)? {
            steps.push(step);
        }
    }
    if steps.is_empty() {
        return Err(ParseError { line: 1, column: 1, reason: "script has no steps".into() });
    }
    Ok(TestCase { id: 0, seed: 0, technique: Technique::Scripted, steps, target: None })
}
