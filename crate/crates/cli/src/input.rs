//! Kernel spec documents and builtin examples.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use lis_core::kernels::{GeneralTable, LinearLongMemory, MarkovTable, SiteIndexed};
use lis_core::{Alphabet, Caps, KernelFamily, KernelSpec, PowerLawNormalization};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub alphabet: AlphabetDoc,
    pub kernel: FamilyDoc,
    pub memory_depth: usize,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphabetDoc {
    pub symbols: Vec<String>,
    #[serde(default)]
    pub metric: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyDoc {
    Markov {
        range: usize,
        rows: Vec<Vec<f64>>,
    },
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
        #[serde(default)]
        tail: f64,
    },
    Table {
        rows: Vec<Vec<f64>>,
    },
    SiteIndexed {
        default: Box<FamilyDoc>,
        #[serde(default)]
        overrides: Vec<OverrideDoc>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideDoc {
    pub site: i64,
    pub kernel: FamilyDoc,
}

impl FamilyDoc {
    fn into_family(self) -> KernelFamily {
        match self {
            FamilyDoc::Markov { range, rows } => KernelFamily::Markov(MarkovTable { range, rows }),
            FamilyDoc::Linear {
                intercept,
                coefficients,
                tail,
            } => KernelFamily::Linear(LinearLongMemory {
                intercept,
                coefficients,
                tail,
            }),
            FamilyDoc::Table { rows } => KernelFamily::Table(GeneralTable { rows }),
            FamilyDoc::SiteIndexed { default, overrides } => KernelFamily::SiteIndexed(SiteIndexed {
                default: Box::new(default.into_family()),
                overrides: overrides
                    .into_iter()
                    .map(|o| (o.site, o.kernel.into_family()))
                    .collect::<BTreeMap<_, _>>(),
            }),
        }
    }
}

/// A loaded kernel with the provenance embedded in reports.
pub struct LoadedKernel {
    pub kernel: KernelSpec,
    pub source: String,
    pub sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds the kernel described by `doc`; `validate = false` keeps only the
/// structural checks so that unnormalized kernels can be inspected.
pub fn build_kernel(doc: SpecDocument, validate: bool) -> Result<KernelSpec> {
    let alphabet = match doc.alphabet.metric {
        Some(rows) => Alphabet::with_metric(doc.alphabet.symbols, &rows),
        None => Alphabet::discrete(doc.alphabet.symbols),
    }
    .context("alphabet")?;
    let family = doc.kernel.into_family();
    let kernel = if validate {
        KernelSpec::new(alphabet, doc.memory_depth, family)
    } else {
        KernelSpec::new_unchecked(alphabet, doc.memory_depth, family)
    }
    .context("kernel")?;
    Ok(match doc.label {
        Some(label) => kernel.with_label(label),
        None => kernel,
    })
}

pub fn parse_spec(text: &str, validate: bool) -> Result<KernelSpec> {
    let doc: SpecDocument = serde_json::from_str(text).context("malformed kernel spec")?;
    build_kernel(doc, validate)
}

pub fn load_spec(path: &Path, validate: bool, caps: Caps) -> Result<LoadedKernel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let kernel = parse_spec(text, validate).with_context(|| format!("in {}", path.display()))?;
    Ok(LoadedKernel {
        kernel: kernel.with_caps(caps),
        source: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Example {
    PaperPowerlaw,
    Markov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Normalization {
    Infinite,
    Truncated,
}

#[derive(Clone, Debug, clap::Args)]
pub struct ExampleArgs {
    /// Builtin kernel instead of a spec file.
    #[arg(long, value_enum)]
    pub example: Option<Example>,
    /// Power-law exponent offset, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Power-law memory depth.
    #[arg(long, default_value_t = 64)]
    pub depth: usize,
    /// Power-law intercept `P(1 | all zeros)`.
    #[arg(long, default_value_t = 0.0)]
    pub intercept: f64,
    #[arg(long, value_enum, default_value_t = Normalization::Infinite)]
    pub normalization: Normalization,
    /// `P(1 | 0)` of the two-state chain.
    #[arg(long, default_value_t = 0.3)]
    pub p01: f64,
    /// `P(1 | 1)` of the two-state chain.
    #[arg(long, default_value_t = 0.7)]
    pub p11: f64,
}

pub fn build_example(args: &ExampleArgs, example: Example, caps: Caps) -> Result<LoadedKernel> {
    let (kernel, source) = match example {
        Example::PaperPowerlaw => {
            let normalization = match args.normalization {
                Normalization::Infinite => PowerLawNormalization::Infinite,
                Normalization::Truncated => PowerLawNormalization::Truncated,
            };
            let k = KernelSpec::power_law(args.epsilon, args.depth, normalization, args.intercept)?;
            let source = format!(
                "example paper-powerlaw epsilon={} depth={} intercept={} normalization={:?}",
                args.epsilon, args.depth, args.intercept, args.normalization
            );
            (k, source)
        }
        Example::Markov => {
            let k = KernelSpec::binary_markov(args.p01, args.p11)?
                .with_label(format!("markov p01={} p11={}", args.p01, args.p11));
            (k, format!("example markov p01={} p11={}", args.p01, args.p11))
        }
    };
    let sha256 = sha256_hex(source.as_bytes());
    Ok(LoadedKernel {
        kernel: kernel.with_caps(caps),
        source,
        sha256,
    })
}

/// Resolves either a spec path or a builtin example, never both.
pub fn resolve(spec: Option<&Path>, example: &ExampleArgs, validate: bool, caps: Caps) -> Result<LoadedKernel> {
    match (spec, example.example) {
        (Some(path), None) => load_spec(path, validate, caps),
        (None, Some(which)) => build_example(example, which, caps),
        (Some(_), Some(_)) => bail!("give either a spec file or --example, not both"),
        (None, None) => bail!("a spec file or --example is required"),
    }
}

/// Symbol index from a label or a numeric index.
pub fn symbol_index(alphabet: &Alphabet, symbol: Option<&str>) -> Result<usize> {
    match symbol {
        None => Ok(alphabet.size() - 1),
        Some(s) => alphabet
            .index_of(s)
            .or_else(|| s.parse::<usize>().ok().filter(|i| *i < alphabet.size()))
            .with_context(|| format!("unknown symbol {s:?}")),
    }
}
