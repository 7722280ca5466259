//! Command-line front end: downloads survey component files, harmonizes them
//! into per-category views, and runs the analysis/experiment pipelines.
//! Every command except `download` works fully offline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nhanes_views::cca::CcaModel;
use nhanes_views::eval::{roc_svg, ClassificationReport};
use nhanes_views::harmonize::{
    apply_rules, histogram, histogram_svg, outer_merge, summarize, HarmonizationRule,
};
use nhanes_views::ingest::{
    build_component_url, fetch_components, Category, ComponentRef, CycleId, DirTransport,
    FetchOutcome, HttpTransport, IngestError, Transport,
};
use nhanes_views::linalg::Matrix;
use nhanes_views::pca::PcaModel;
use nhanes_views::svm::KernelSpec;
use nhanes_views::synth;
use nhanes_views::table::{CellValue, ColumnTable};
use nhanes_views::task::{run_experiment, ExperimentConfig, ModelVariant, Scheme, ViewSet};
use nhanes_views::xport;

const DEFAULT_COMPONENTS: &str = include_str!("../../../assets/components.json");
const DEFAULT_RULES_DEMOGRAPHICS: &str = include_str!("../../../assets/rules/demographics.json");
const DEFAULT_RULES_BODY: &str = include_str!("../../../assets/rules/body_measures.json");
const DEFAULT_RULES_LABORATORY: &str = include_str!("../../../assets/rules/laboratory.json");
const DEFAULT_RULES_QUESTIONNAIRE: &str = include_str!("../../../assets/rules/questionnaire.json");

#[derive(Parser)]
#[command(name = "nhanes", version, about = "Survey download, harmonization and modeling toolkit")]
struct Cli {
    /// Path to a JSON config file (required by `experiment`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the random seed of any loaded config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report errors as one JSON object on stderr
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch raw component files into the local cache
    Download {
        /// Comma-separated cycle start years (default: all eight)
        #[arg(long)]
        cycles: Option<String>,
        /// Component manifest JSON (default: bundled manifest)
        #[arg(long)]
        components: Option<PathBuf>,
        /// Serve files from this directory instead of the network
        #[arg(long)]
        from_dir: Option<PathBuf>,
        /// Cache directory (default: $NHANES_CACHE_DIR or ./nhanes-cache)
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Harmonize cached component files into per-category view files
    Clean {
        /// Directory of per-category rule files (default: bundled rules)
        #[arg(long)]
        rules_dir: Option<PathBuf>,
        #[arg(long)]
        components: Option<PathBuf>,
        #[arg(long)]
        cycles: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Serve files from this directory instead of the cache
        #[arg(long)]
        from_dir: Option<PathBuf>,
        /// Fail on unmapped recode values instead of warning
        #[arg(long)]
        strict: bool,
    },
    /// Summary statistics and a histogram for one view column
    Eda {
        /// View file stem (reads <stem>.csv + <stem>.schema.json)
        #[arg(long)]
        view: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 5.0)]
        bin_width: f64,
        #[arg(long)]
        group_by: Option<String>,
        /// Restrict to respondents older than 20 before summarizing
        #[arg(long)]
        adults_only: bool,
    },
    /// Principal component analysis of one view's numeric columns
    Pca {
        #[arg(long)]
        view: PathBuf,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
    /// Canonical correlation analysis between two views
    Cca {
        #[arg(long)]
        view_x: PathBuf,
        #[arg(long)]
        view_y: PathBuf,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = nhanes_views::cca::DEFAULT_RIDGE)]
        ridge: f64,
    },
    /// Run the model-variant experiment described by --config
    Experiment,
}

// ------------------------------------------------------------- config types

/// Component manifest entry: the file stem per cycle ("default" = all
/// cycles without an explicit entry).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentSpec {
    category: Category,
    names: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentManifest {
    components: Vec<ComponentSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewPaths {
    demographics: PathBuf,
    body_measures: PathBuf,
    laboratory: PathBuf,
    questionnaire: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticSpec {
    n: usize,
    #[serde(default)]
    seed: u64,
}

/// Experiment run config: model settings plus exactly one input source.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    scheme: Scheme,
    variants: Vec<ModelVariant>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_split_fraction")]
    split_fraction: f64,
    #[serde(default = "default_ridge")]
    ridge: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default)]
    grid: Option<Vec<(KernelSpec, f64)>>,
    #[serde(default)]
    views: Option<ViewPaths>,
    #[serde(default)]
    synthetic: Option<SyntheticSpec>,
}

fn default_split_fraction() -> f64 {
    0.7
}
fn default_ridge() -> f64 {
    nhanes_views::cca::DEFAULT_RIDGE
}
fn default_tol() -> f64 {
    nhanes_views::svm::DEFAULT_TOL
}

// ------------------------------------------------------------------ helpers

fn resolve_cache_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("NHANES_CACHE_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nhanes-cache"))
}

fn parse_cycles(arg: Option<&str>) -> Result<Vec<CycleId>> {
    match arg {
        None => Ok(CycleId::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| {
                let year: u16 = s.trim().parse().with_context(|| format!("bad cycle year {s:?}"))?;
                Ok(CycleId::new(year)?)
            })
            .collect(),
    }
}

fn load_manifest(path: Option<&Path>) -> Result<ComponentManifest> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_COMPONENTS.to_string(),
    };
    Ok(serde_json::from_str(&text).context("parsing component manifest")?)
}

fn component_refs(manifest: &ComponentManifest, cycles: &[CycleId]) -> Vec<ComponentRef> {
    let mut refs = Vec::new();
    for spec in &manifest.components {
        for &cycle in cycles {
            let label = cycle.label();
            let base = spec
                .names
                .get(&label)
                .or_else(|| spec.names.get("default"))
                .cloned();
            if let Some(base_name) = base {
                refs.push(ComponentRef {
                    base_name,
                    cycle,
                    category: spec.category,
                });
            }
        }
    }
    refs
}

/// Transport for offline commands: anything not already cached is an error.
struct OfflineTransport;

impl Transport for OfflineTransport {
    fn fetch(&self, url: &str) -> Result<FetchOutcome, IngestError> {
        Err(IngestError::Transport {
            url: url.to_string(),
            message: "offline: file not in cache (run `nhanes download` first)".to_string(),
        })
    }
}

fn load_rules(rules_dir: Option<&Path>, category: Category) -> Result<Vec<HarmonizationRule>> {
    let (file, bundled) = match category {
        Category::Demographics => ("demographics.json", DEFAULT_RULES_DEMOGRAPHICS),
        Category::Examination => ("body_measures.json", DEFAULT_RULES_BODY),
        Category::Laboratory => ("laboratory.json", DEFAULT_RULES_LABORATORY),
        Category::Questionnaire => ("questionnaire.json", DEFAULT_RULES_QUESTIONNAIRE),
    };
    let text = match rules_dir {
        Some(dir) => {
            let path = dir.join(file);
            std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?
        }
        None => bundled.to_string(),
    };
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing rules {file}"))?)
}

fn view_name(category: Category) -> &'static str {
    match category {
        Category::Demographics => "demographics",
        Category::Examination => "body_measures",
        Category::Laboratory => "laboratory",
        Category::Questionnaire => "questionnaire",
    }
}

/// File name fragment for a model variant ("REG+[CCA-DL-15-ALL]-5" →
/// "REG_CCA-DL-15-ALL_5").
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .replace("__", "_")
}

/// All-numeric complete-case matrix from a view's non-key columns.
fn view_matrix(table: &ColumnTable) -> Result<(Vec<String>, Matrix)> {
    let names: Vec<String> = table
        .column_names()
        .filter(|&n| n != table.key_name())
        .filter(|&n| {
            table
                .column(n)
                .is_some_and(|col| col.iter().all(|c| !matches!(c, CellValue::Text(_))))
        })
        .map(|s| s.to_string())
        .collect();
    if names.is_empty() {
        bail!("view has no numeric columns");
    }
    let columns: Vec<Vec<Option<f64>>> = names
        .iter()
        .map(|n| table.numeric_column(n))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<f64>> = (0..table.n_rows())
        .filter_map(|i| {
            columns
                .iter()
                .map(|col| col[i])
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    if rows.is_empty() {
        bail!("view has no complete-case rows");
    }
    Ok((names, Matrix::from_rows(rows)))
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

// ----------------------------------------------------------------- commands

#[derive(Serialize)]
struct DownloadRow {
    url: String,
    present: bool,
    bytes: usize,
}

fn cmd_download(
    out: &Path,
    cycles: Option<&str>,
    components: Option<&Path>,
    from_dir: Option<&Path>,
    cache_dir: Option<PathBuf>,
) -> Result<()> {
    let cycles = parse_cycles(cycles)?;
    let manifest = load_manifest(components)?;
    let refs = component_refs(&manifest, &cycles);
    let cache = resolve_cache_dir(cache_dir);
    let transport: Box<dyn Transport> = match from_dir {
        Some(dir) => Box::new(DirTransport { root: dir.to_path_buf() }),
        None => Box::new(HttpTransport::new()),
    };
    let fetched = fetch_components(transport.as_ref(), &cache, &refs)?;
    let rows: Vec<DownloadRow> = fetched
        .iter()
        .map(|f| DownloadRow {
            url: f.url.clone(),
            present: f.data.is_some(),
            bytes: f.data.as_ref().map_or(0, |d| d.len()),
        })
        .collect();
    write_text(
        &out.join("download_report.json"),
        &serde_json::to_string_pretty(&rows)?,
    )?;
    let present = rows.iter().filter(|r| r.present).count();
    println!(
        "downloaded {present}/{} files into {} (report: {})",
        rows.len(),
        cache.display(),
        out.join("download_report.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CleanRow {
    view: String,
    rows: usize,
    columns: usize,
    unmapped_values: usize,
    absent_sources: Vec<String>,
}

fn cmd_clean(
    out: &Path,
    rules_dir: Option<&Path>,
    components: Option<&Path>,
    cycles: Option<&str>,
    cache_dir: Option<PathBuf>,
    from_dir: Option<&Path>,
    strict: bool,
) -> Result<()> {
    let cycles = parse_cycles(cycles)?;
    let manifest = load_manifest(components)?;
    let cache = resolve_cache_dir(cache_dir);
    let transport: Box<dyn Transport> = match from_dir {
        Some(dir) => Box::new(DirTransport { root: dir.to_path_buf() }),
        None => Box::new(OfflineTransport),
    };

    let mut report = Vec::new();
    for category in Category::ALL {
        let refs: Vec<ComponentRef> = component_refs(&manifest, &cycles)
            .into_iter()
            .filter(|r| r.category == category)
            .collect();
        if refs.is_empty() {
            continue;
        }
        // parse every present file, grouped by cycle
        let mut per_cycle: BTreeMap<String, Vec<ColumnTable>> = BTreeMap::new();
        for component in &refs {
            let url = build_component_url(component);
            let outcome =
                nhanes_views::ingest::fetch_cached(transport.as_ref(), &cache, &url)?;
            let FetchOutcome::Ok(bytes) = outcome else { continue };
            let library = xport::parse_library(&bytes)
                .with_context(|| format!("parsing {url}"))?;
            let Some(member) = library.members.first() else { continue };
            let table = xport::read_observations(member, &bytes)
                .with_context(|| format!("reading {url}"))?;
            per_cycle
                .entry(component.cycle.label())
                .or_default()
                .push(table);
        }
        let raw: BTreeMap<String, ColumnTable> = per_cycle
            .into_iter()
            .map(|(label, tables)| Ok((label, outer_merge(&tables)?)))
            .collect::<Result<_>>()?;
        if raw.is_empty() {
            bail!(
                "no cached files for category {:?}; run `nhanes download` first",
                category
            );
        }
        let rules = load_rules(rules_dir, category)?;
        let (view, apply_report) = apply_rules(&raw, &rules, strict)?;
        std::fs::create_dir_all(out)?;
        view.write_view(&out.join(view_name(category)), true)?;
        report.push(CleanRow {
            view: view_name(category).to_string(),
            rows: view.n_rows(),
            columns: view.column_names().count(),
            unmapped_values: apply_report.unmapped_values,
            absent_sources: apply_report.absent_sources,
        });
    }
    write_text(&out.join("clean_report.json"), &serde_json::to_string_pretty(&report)?)?;
    for row in &report {
        println!("{}: {} rows × {} columns", row.view, row.rows, row.columns);
    }
    Ok(())
}

fn cmd_eda(
    out: &Path,
    view: &Path,
    column: &str,
    bin_width: f64,
    group_by: Option<&str>,
    adults_only: bool,
) -> Result<()> {
    let table = ColumnTable::read_view(view)?;
    let summary = summarize(&table, adults_only.then_some("AGE"))?;
    let mut csv = String::from("column,count,mean,std,min,p25,p50,p75,max\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for col in &summary.columns {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            col.name,
            col.count,
            fmt(col.mean),
            fmt(col.std),
            fmt(col.min),
            fmt(col.p25),
            fmt(col.p50),
            fmt(col.p75),
            fmt(col.max),
        ));
    }
    write_text(&out.join("summary.csv"), &csv)?;

    let hist = histogram(&table, column, bin_width, group_by)?;
    let groups: Vec<String> = hist
        .bins
        .iter()
        .flat_map(|b| b.groups.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut csv = String::from("left,total");
    for g in &groups {
        csv.push_str(&format!(",{g}"));
    }
    csv.push('\n');
    for bin in &hist.bins {
        csv.push_str(&format!("{},{}", bin.left, bin.total));
        for g in &groups {
            csv.push_str(&format!(",{}", bin.groups.get(g).copied().unwrap_or(0)));
        }
        csv.push('\n');
    }
    let stem = format!("histogram_{}", sanitize(column));
    write_text(&out.join(format!("{stem}.csv")), &csv)?;
    write_text(
        &out.join(format!("{stem}.svg")),
        &histogram_svg(&hist, &format!("{column} (bin width {bin_width})")),
    )?;
    println!(
        "wrote {} and {stem}.csv/.svg in {}",
        "summary.csv",
        out.display()
    );
    Ok(())
}

fn cmd_pca(out: &Path, view: &Path, k: usize) -> Result<()> {
    let table = ColumnTable::read_view(view)?;
    let (names, x) = view_matrix(&table)?;
    let model = PcaModel::fit_opts(&x, k, true, Some(names))?;
    write_text(&out.join("pca_model.json"), &serde_json::to_string_pretty(&model)?)?;
    let mut csv = String::from("component,explained_variance,variable,weight\n");
    for (j, loadings) in model.loadings()?.iter().enumerate() {
        for loading in loadings {
            csv.push_str(&format!(
                "{},{:.6},{},{:.6}\n",
                j + 1,
                model.explained_variance[j],
                loading.variable,
                loading.weight
            ));
        }
    }
    write_text(&out.join("pca_loadings.csv"), &csv)?;
    println!("wrote pca_model.json and pca_loadings.csv in {}", out.display());
    Ok(())
}

fn cmd_cca(out: &Path, view_x: &Path, view_y: &Path, k: usize, ridge: f64) -> Result<()> {
    let tx = ColumnTable::read_view(view_x)?;
    let ty = ColumnTable::read_view(view_y)?;
    // pair rows by respondent key, then keep complete cases on both sides
    let (names_x, _) = view_matrix(&tx)?;
    let (names_y, _) = view_matrix(&ty)?;
    let joined = nhanes_views::harmonize::join_views(&tx, &ty)?;
    let cols_x: Vec<Vec<Option<f64>>> = names_x
        .iter()
        .map(|n| joined.numeric_column(n))
        .collect::<Result<_, _>>()?;
    let cols_y: Vec<Vec<Option<f64>>> = names_y
        .iter()
        .map(|n| joined.numeric_column(n))
        .collect::<Result<_, _>>()?;
    let mut rows_x = Vec::new();
    let mut rows_y = Vec::new();
    for i in 0..joined.n_rows() {
        let rx: Option<Vec<f64>> = cols_x.iter().map(|c| c[i]).collect();
        let ry: Option<Vec<f64>> = cols_y.iter().map(|c| c[i]).collect();
        if let (Some(rx), Some(ry)) = (rx, ry) {
            rows_x.push(rx);
            rows_y.push(ry);
        }
    }
    if rows_x.is_empty() {
        bail!("no paired complete-case rows between the two views");
    }
    let model = CcaModel::fit_named(
        &Matrix::from_rows(rows_x),
        &Matrix::from_rows(rows_y),
        k,
        ridge,
        Some(names_x),
        Some(names_y),
    )?;
    write_text(&out.join("cca_model.json"), &serde_json::to_string_pretty(&model)?)?;
    let mut csv = String::from("component,correlation,side,variable,weight\n");
    for (j, comp) in model.loadings()?.iter().enumerate() {
        for (side, loadings) in [("x", &comp.x), ("y", &comp.y)] {
            for loading in loadings {
                csv.push_str(&format!(
                    "{},{:.6},{},{},{:.6}\n",
                    j + 1,
                    comp.correlation,
                    side,
                    loading.variable,
                    loading.weight
                ));
            }
        }
    }
    write_text(&out.join("cca_loadings.csv"), &csv)?;
    println!("wrote cca_model.json and cca_loadings.csv in {}", out.display());
    Ok(())
}

fn cmd_experiment(out: &Path, config_path: &Path, seed_override: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let file: ExperimentFile = serde_json::from_str(&text).context("parsing experiment config")?;
    let views = match (&file.views, &file.synthetic) {
        (Some(paths), None) => ViewSet {
            demographics: ColumnTable::read_view(&paths.demographics)?,
            body_measures: ColumnTable::read_view(&paths.body_measures)?,
            laboratory: ColumnTable::read_view(&paths.laboratory)?,
            questionnaire: ColumnTable::read_view(&paths.questionnaire)?,
        },
        (None, Some(spec)) => {
            let generated = synth::generate(&synth::SynthConfig {
                n: spec.n,
                seed: spec.seed,
                ..synth::SynthConfig::default()
            });
            ViewSet {
                demographics: generated.demographics,
                body_measures: generated.body_measures,
                laboratory: generated.laboratory,
                questionnaire: generated.questionnaire,
            }
        }
        _ => bail!("config must set exactly one of `views` or `synthetic`"),
    };
    let config = ExperimentConfig {
        scheme: file.scheme,
        variants: file.variants,
        seed: seed_override.unwrap_or(file.seed),
        split_fraction: file.split_fraction,
        ridge: file.ridge,
        tol: file.tol,
        grid: file.grid,
    };
    let outcome = run_experiment(views, &config)?;

    let mut csv = String::from(ClassificationReport::csv_header());
    csv.push('\n');
    for report in &outcome.reports {
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    write_text(&out.join("reports.csv"), &csv)?;
    write_text(&out.join("reports.json"), &serde_json::to_string_pretty(&outcome)?)?;
    for (name, roc) in &outcome.rocs {
        write_text(
            &out.join(format!("roc_{}.svg", sanitize(name))),
            &roc_svg(roc, name),
        )?;
    }
    for report in &outcome.reports {
        println!("{}", report.csv_row());
    }
    for failure in &outcome.failures {
        eprintln!("variant {} failed: {}", failure.variant, failure.error);
    }
    if outcome.reports.is_empty() {
        bail!("every variant failed");
    }
    Ok(())
}

// --------------------------------------------------------------------- main

fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Download {
            cycles,
            components,
            from_dir,
            cache_dir,
        } => cmd_download(
            &cli.out,
            cycles.as_deref(),
            components.as_deref(),
            from_dir.as_deref(),
            cache_dir.clone(),
        ),
        Command::Clean {
            rules_dir,
            components,
            cycles,
            cache_dir,
            from_dir,
            strict,
        } => cmd_clean(
            &cli.out,
            rules_dir.as_deref(),
            components.as_deref(),
            cycles.as_deref(),
            cache_dir.clone(),
            from_dir.as_deref(),
            *strict,
        ),
        Command::Eda {
            view,
            column,
            bin_width,
            group_by,
            adults_only,
        } => cmd_eda(&cli.out, view, column, *bin_width, group_by.as_deref(), *adults_only),
        Command::Pca { view, k } => cmd_pca(&cli.out, view, *k),
        Command::Cca {
            view_x,
            view_y,
            k,
            ridge,
        } => cmd_cca(&cli.out, view_x, view_y, *k, *ridge),
        Command::Experiment => {
            let config = cli
                .config
                .as_deref()
                .context("`experiment` requires --config <file>")?;
            cmd_experiment(&cli.out, config, cli.seed)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    if let Err(error) = run(cli) {
        if json_errors {
            let payload = serde_json::json!({
                "error": error.to_string(),
                "chain": error.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{payload}");
        } else {
            eprintln!("error: {error:#}");
        }
        std::process::exit(1);
    }
}
