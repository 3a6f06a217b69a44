use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// Which attention pattern a model uses, with its pattern parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttentionSpec {
    Full,
    /// Longformer-style dilated window. Key `j` is visible to query `i` when
    /// `|i-j| <= window*dilation` and `(i-j) % dilation == 0`; tokens in
    /// `global` see and are seen by every position.
    SlidingWindow {
        window: usize,
        dilation: usize,
        #[serde(default)]
        global: Vec<usize>,
    },
    /// Big Bird-style blocks: neighbouring blocks, `global` leading blocks
    /// and `random` seeded blocks per query block.
    BlockSparse {
        block: usize,
        random: usize,
        global: usize,
        seed: u64,
    },
    /// Landmark approximation; evaluated algebraically, never masked.
    Nystrom { landmarks: usize, pinv_iters: usize },
    /// Local window, strided sparse blocks and global leading blocks. Block
    /// size equals `max(local, 1)`.
    LocalSparseGlobal {
        local: usize,
        stride: usize,
        global: usize,
    },
}

impl Default for AttentionSpec {
    fn default() -> Self {
        AttentionSpec::Full
    }
}

impl AttentionSpec {
    pub fn window(window: usize) -> Self {
        AttentionSpec::SlidingWindow {
            window,
            dilation: 1,
            global: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttentionSpec::Full => {}
            AttentionSpec::SlidingWindow { dilation, .. } => {
                if *dilation < 1 {
                    bail!(Parameter, "dilation must be at least 1");
                }
            }
            AttentionSpec::BlockSparse { block, .. } => {
                if *block < 1 {
                    bail!(Parameter, "block size must be at least 1");
                }
            }
            AttentionSpec::Nystrom {
                landmarks,
                pinv_iters,
            } => {
                if *landmarks < 1 {
                    bail!(Parameter, "landmark count must be at least 1");
                }
                if *pinv_iters < 1 {
                    bail!(Parameter, "pseudoinverse iterations must be at least 1");
                }
            }
            AttentionSpec::LocalSparseGlobal { stride, .. } => {
                if *stride < 2 {
                    bail!(Parameter, "sparse stride must be at least 2");
                }
            }
        }
        Ok(())
    }

    /// Checks the parts of the spec that depend on the sequence length.
    pub fn validate_for_len(&self, n: usize) -> Result<()> {
        self.validate()?;
        match self {
            AttentionSpec::SlidingWindow { global, .. } => {
                if let Some(&g) = global.iter().find(|&&g| g >= n) {
                    bail!(Parameter, "global token {g} out of range for length {n}");
                }
            }
            AttentionSpec::Nystrom { landmarks, .. } => {
                if *landmarks > n {
                    bail!(Parameter, "{landmarks} landmarks exceed sequence length {n}");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_masked(&self) -> bool {
        !matches!(self, AttentionSpec::Nystrom { .. })
    }

    /// Short family label used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            AttentionSpec::Full => "full",
            AttentionSpec::SlidingWindow { .. } => "window",
            AttentionSpec::BlockSparse { .. } => "bigbird",
            AttentionSpec::Nystrom { .. } => "nystrom",
            AttentionSpec::LocalSparseGlobal { .. } => "lsg",
        }
    }
}

/// Mini-grammar: `full`, `window:w=8,d=1,g=0`, `bigbird:b=4,r=2,g=1,seed=7`,
/// `nystrom:m=8,it=6`, `lsg:w=4,s=4,g=1`. For windows `g` lists global
/// token indices joined by `+`.
impl FromStr for AttentionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, args) = match s.split_once(':') {
            Some((f, a)) => (f, a),
            None => (s, ""),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let Some((k, v)) = part.split_once('=') else {
                bail!(Input, "pattern argument `{part}` is not key=value");
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut args = PatternArgs { family, pairs };
        let spec = match family {
            "full" => AttentionSpec::Full,
            "window" => AttentionSpec::SlidingWindow {
                window: args.take_num("w", None)?,
                dilation: args.take_num("d", Some(1))?,
                global: args.take_list("g")?,
            },
            "bigbird" => AttentionSpec::BlockSparse {
                block: args.take_num("b", None)?,
                random: args.take_num("r", Some(0))?,
                global: args.take_num("g", Some(0))?,
                seed: args.take_num("seed", Some(0))?,
            },
            "nystrom" => AttentionSpec::Nystrom {
                landmarks: args.take_num("m", None)?,
                pinv_iters: args.take_num("it", Some(6))?,
            },
            "lsg" => AttentionSpec::LocalSparseGlobal {
                local: args.take_num("w", None)?,
                stride: args.take_num("s", None)?,
                global: args.take_num("g", Some(0))?,
            },
            other => bail!(Input, "unknown attention pattern `{other}`"),
        };
        args.finish()?;
        spec.validate()?;
        Ok(spec)
    }
}

struct PatternArgs<'a> {
    family: &'a str,
    pairs: Vec<(String, String)>,
}

impl PatternArgs<'_> {
    fn take(&mut self, key: &str) -> Option<String> {
        let pos = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(pos).1)
    }

    fn take_num<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Result<T> {
        match self.take(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Input(format!("`{key}={v}` is not a number"))),
            None => default.ok_or_else(|| {
                Error::Input(format!("pattern `{}` requires `{key}=`", self.family))
            }),
        }
    }

    fn take_list(&mut self, key: &str) -> Result<Vec<usize>> {
        let Some(v) = self.take(key) else {
            return Ok(Vec::new());
        };
        v.split('+')
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::Input(format!("`{key}={v}` is not an index list")))
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        if let Some((k, _)) = self.pairs.first() {
            bail!(Input, "unknown argument `{k}` for pattern `{}`", self.family);
        }
        Ok(())
    }
}

impl fmt::Display for AttentionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionSpec::Full => write!(f, "full"),
            AttentionSpec::SlidingWindow {
                window,
                dilation,
                global,
            } => {
                write!(f, "window:w={window},d={dilation}")?;
                if !global.is_empty() {
                    let list: Vec<String> = global.iter().map(|g| g.to_string()).collect();
                    write!(f, ",g={}", list.join("+"))?;
                }
                Ok(())
            }
            AttentionSpec::BlockSparse {
                block,
                random,
                global,
                seed,
            } => write!(f, "bigbird:b={block},r={random},g={global},seed={seed}"),
            AttentionSpec::Nystrom {
                landmarks,
                pinv_iters,
            } => write!(f, "nystrom:m={landmarks},it={pinv_iters}"),
            AttentionSpec::LocalSparseGlobal {
                local,
                stride,
                global,
            } => write!(f, "lsg:w={local},s={stride},g={global}"),
        }
    }
}
