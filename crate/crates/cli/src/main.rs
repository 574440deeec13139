use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use splitmodel::fit::{self, DEFAULT_MAX_ITER, DEFAULT_TOL};
use splitmodel::graph::cliques_text_in;
use splitmodel::report;
use splitmodel::select::{self, Partition, SelectionOptions};
use splitmodel::{ContingencyTable, Context, Edge, Error, GeneratingClass, Graph, SplitGraph, VarSet};

#[derive(Parser)]
#[command(name = "splitmodel", version, about = "Fit, test and select context-specific interaction and split models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a generating class and print its deviance row.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Generating class, e.g. "[ABCE][BCDE][CDEF]" or "[BD,A=1][CD,A=2]".
        #[arg(long)]
        model: String,
    },
    /// Backward elimination of edges.
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        /// Starting graph; the complete graph by default.
        #[arg(long)]
        graph: Option<String>,
    },
    /// Search for split models in the cliques of a graph.
    SplitSelect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[command(flatten)]
        split: SplitArgs,
        /// Graph to split; by default the result of `select` with the same options.
        #[arg(long)]
        graph: Option<String>,
        /// Write the selected split model as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Test removal of an edge separately in the slices of neighbouring variables.
    TestEdge {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        /// Edge, e.g. "BD" or "X1,X2".
        #[arg(long)]
        edge: String,
        #[arg(long, value_enum, default_value_t = PartitionArg::Single)]
        partition: PartitionArg,
        /// Graph holding the edge; by default the result of `select`.
        #[arg(long)]
        graph: Option<String>,
    },
    /// Write instantiated graphs of a model as DOT files.
    Instantiate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Context such as "C=1"; repeatable.
        #[arg(long)]
        context: Vec<String>,
        /// Instantiate once per level combination of these variables.
        #[arg(long)]
        all: Option<String>,
        /// Drop the conditioned variables from the graphs.
        #[arg(long)]
        eliminate: bool,
        #[command(flatten)]
        out: DotOut,
    },
    /// Write the root graph and every context graph of a model as DOT files.
    ExportDot {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        out: DotOut,
    },
    /// Deviance decomposition of a split model.
    Summary {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        #[command(flatten)]
        split: SplitArgs,
        /// Saved split model; by default one is selected with the given options.
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Table JSON document.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct Selection {
    /// Variables whose edges are never removed, e.g. "ABC"; repeatable.
    #[arg(long)]
    fix: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    p_accepted: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    decomposable: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    recursive: bool,
}

#[derive(Args)]
struct SplitArgs {
    /// Cliques to split together, e.g. "[BCDE]+[ABCE]"; repeatable.
    #[arg(long)]
    collection: Vec<String>,
    /// Variables never used as split variables, e.g. "D,F".
    #[arg(long)]
    exclude_split: Option<String>,
    /// Also search for splits inside the children of adopted splits.
    #[arg(long)]
    nested: bool,
}

#[derive(Args)]
struct ModelSource {
    /// Saved split model JSON.
    #[arg(long, conflicts_with_all = ["model", "graph"])]
    model_file: Option<PathBuf>,
    /// Generating class text.
    #[arg(long, conflicts_with = "graph")]
    model: Option<String>,
    /// Graph text.
    #[arg(long)]
    graph: Option<String>,
}

#[derive(Args)]
struct DotOut {
    /// Directory for the DOT files; printed to stdout when absent.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    stem: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Single,
    Joint,
}

enum Failure {
    Usage(String),
    Io(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::NotConverged(out)) => {
            print!("{out}");
            eprintln!("error: fitting did not converge");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Fit { common, model } => cmd_fit(&common, &model),
        Command::Select { common, selection, graph } => cmd_select(&common, &selection, graph.as_deref()),
        Command::SplitSelect {
            common,
            selection,
            split,
            graph,
            save,
        } => cmd_split_select(&common, &selection, &split, graph.as_deref(), save.as_deref()),
        Command::TestEdge {
            common,
            selection,
            edge,
            partition,
            graph,
        } => cmd_test_edge(&common, &selection, &edge, partition, graph.as_deref()),
        Command::Instantiate {
            common,
            source,
            context,
            all,
            eliminate,
            out,
        } => cmd_instantiate(&common, &source, &context, all.as_deref(), eliminate, &out),
        Command::ExportDot { common, source, out } => cmd_export_dot(&common, &source, &out),
        Command::Summary {
            common,
            selection,
            split,
            model_file,
        } => cmd_summary(&common, &selection, &split, model_file.as_deref()),
    }
}

fn read_file(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_table(common: &Common) -> std::result::Result<ContingencyTable, Failure> {
    Ok(ContingencyTable::from_json(&read_file(&common.table)?)?)
}

fn names(table: &ContingencyTable) -> Vec<String> {
    table.schema().names().map(String::from).collect()
}

fn parse_graph(table: &ContingencyTable, text: &str) -> std::result::Result<Graph, Failure> {
    let mut g = Graph::parse(text, Some(&names(table)))?;
    for v in table.schema().names() {
        g.add_vertex(v);
    }
    if g.vertex_set() != table.schema().var_set() {
        return Err(Failure::Usage("graph mentions variables outside the table".into()));
    }
    Ok(g)
}

/// A set of names written as "ABC", "A,B,C" or "[ABC]".
fn parse_set(table: &ContingencyTable, text: &str) -> std::result::Result<VarSet, Failure> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    Ok(Graph::parse(&format!("[{inner}]"), Some(&names(table)))?.vertex_set())
}

/// "[BCDE]+[ABCE]", "{[BCDE],[ABCE]}" or "[BCDE][ABCE]".
fn parse_collection(table: &ContingencyTable, text: &str) -> std::result::Result<Vec<VarSet>, Failure> {
    let mut sets = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        let end = rest[start..]
            .find(']')
            .ok_or_else(|| Failure::Usage(format!("unclosed bracket in collection {text:?}")))?;
        sets.push(parse_set(table, &rest[start + 1..start + end])?);
        rest = &rest[start + end + 1..];
    }
    if sets.is_empty() {
        return Err(Failure::Usage(format!("collection {text:?} names no cliques")));
    }
    Ok(sets)
}

fn options(table: &ContingencyTable, sel: &Selection, split: Option<&SplitArgs>) -> std::result::Result<SelectionOptions, Failure> {
    let mut opts = SelectionOptions {
        p_accepted: sel.p_accepted,
        recursive: sel.recursive,
        decomposable_mode: sel.decomposable,
        ..SelectionOptions::default()
    };
    for group in &sel.fix {
        opts.fix_complete(&parse_set(table, group)?);
    }
    if let Some(split) = split {
        for c in &split.collection {
            opts.collections.push(parse_collection(table, c)?);
        }
        if let Some(ex) = &split.exclude_split {
            opts.excluded_split_vars = parse_set(table, ex)?;
        }
        opts.nested = split.nested;
    }
    Ok(opts)
}

fn json_text(value: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&value).expect("json value serializes");
    s.push('\n');
    s
}

fn cmd_fit(common: &Common, model: &str) -> Outcome {
    let table = load_table(common)?;
    let class = GeneratingClass::parse(model, table.schema())?;
    let fit = fit::ips_fit(&table, &class, common.tol, common.max_iter)?;
    let label = class.display(table.schema());
    let out = match common.format {
        Format::Text => format!("{}\n{}\n", report::HEADER, report::fit_row(table.total(), &fit, &label)),
        Format::Json => json_text(json!({ "model": label, "count": table.total(), "fit": fit })),
    };
    if fit.converged {
        Ok(out)
    } else {
        Err(Failure::NotConverged(out))
    }
}

fn start_graph(table: &ContingencyTable, text: Option<&str>) -> std::result::Result<Graph, Failure> {
    match text {
        Some(t) => parse_graph(table, t),
        None => Ok(Graph::complete(&table.schema().var_set())),
    }
}

fn selected_graph(table: &ContingencyTable, opts: &SelectionOptions, text: Option<&str>) -> std::result::Result<Graph, Failure> {
    match text {
        Some(t) => parse_graph(table, t),
        None => Ok(select::drop_least(table, &start_graph(table, None)?, opts)?),
    }
}

fn cmd_select(common: &Common, sel: &Selection, graph: Option<&str>) -> Outcome {
    let table = load_table(common)?;
    let opts = options(&table, sel, None)?;
    let start = start_graph(&table, graph)?;
    let result = select::eliminate(&table, &start, &opts, |_| true)?;
    let fit = fit::fit_graph(&table, &result.graph)?;
    Ok(match common.format {
        Format::Text => {
            let mut s = String::new();
            for r in &result.removed {
                let _ = writeln!(s, "removed {} {} {} {}", r.edge, report::deviance(r.test.deviance), r.test.df, report::p_value(r.test.p_value));
            }
            let _ = writeln!(s, "{}", result.graph.to_text());
            let _ = writeln!(s, "{}", report::HEADER);
            let _ = writeln!(s, "{}", report::fit_row(table.total(), &fit, &result.graph.to_text()));
            s
        }
        Format::Json => json_text(json!({
            "model": result.graph.to_text(),
            "graph": result.graph,
            "removed": result.removed,
            "fit": {
                "deviance": fit.deviance, "df": fit.df, "p_value": fit.p_value, "aic": fit.aic
            },
        })),
    })
}

fn split_model_json(table: &ContingencyTable, sg: &SplitGraph) -> serde_json::Value {
    serde_json::from_str(&sg.to_json(table.schema())).expect("split model document is valid json")
}

fn cmd_split_select(common: &Common, sel: &Selection, split: &SplitArgs, graph: Option<&str>, save: Option<&Path>) -> Outcome {
    let table = load_table(common)?;
    let opts = options(&table, sel, Some(split))?;
    let g = selected_graph(&table, &opts, graph)?;
    let result = select::split_drop_least(&table, &g, &opts)?;
    if let Some(path) = save {
        std::fs::write(path, result.model.to_json(table.schema())).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(match common.format {
        Format::Text => {
            let mut s = String::from("split candidates (collection, variable, deviance, df, AIC, removed)\n");
            for c in &result.candidates {
                let removed: Vec<String> = c
                    .removed
                    .iter()
                    .filter(|(_, es)| !es.is_empty())
                    .map(|(ctx, es)| format!("{ctx}:{}", es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")))
                    .collect();
                let _ = writeln!(
                    s,
                    "{}{} {} {} {} {} {}{}",
                    if c.context.is_empty() { String::new() } else { format!("({}) ", c.context) },
                    c.collection.join("+"),
                    c.split_variable,
                    report::deviance(c.deviance),
                    c.df,
                    report::aic(c.aic),
                    if removed.is_empty() { "-".to_string() } else { removed.join(" ") },
                    if c.adopted { " adopted" } else { "" }
                );
            }
            s.push_str("model\n");
            s.push_str(&result.model.listing(table.schema()));
            s
        }
        Format::Json => json_text(json!({
            "candidates": result.candidates,
            "listing": result.model.listing(table.schema()).lines().collect::<Vec<_>>(),
            "model": split_model_json(&table, &result.model),
        })),
    })
}

fn cmd_test_edge(common: &Common, sel: &Selection, edge: &str, partition: PartitionArg, graph: Option<&str>) -> Outcome {
    let table = load_table(common)?;
    let opts = options(&table, sel, None)?;
    let g = selected_graph(&table, &opts, graph)?;
    let edge = Edge::parse(edge, Some(&names(&table)))?;
    let mode = match partition {
        PartitionArg::Single => Partition::Single,
        PartitionArg::Joint => Partition::Joint,
    };
    let reports = select::split_test_edge(&table, &g, &edge, mode)?;
    Ok(match common.format {
        Format::Text => {
            let mut s = format!("test of {edge} in {}\n", g.to_text());
            for r in &reports {
                let _ = writeln!(s, "partition by {}", r.variables.join(","));
                let _ = writeln!(s, "{}", report::HEADER);
                for row in r.rows.iter().chain(std::iter::once(&r.total)) {
                    let _ = writeln!(s, "{}", report::row(row));
                }
            }
            s
        }
        Format::Json => json_text(json!({ "edge": edge, "graph": g.to_text(), "reports": reports })),
    })
}

enum Model {
    Class(GeneratingClass),
    Split(SplitGraph),
}

fn load_model(table: &ContingencyTable, source: &ModelSource) -> std::result::Result<Model, Failure> {
    if let Some(path) = &source.model_file {
        return Ok(Model::Split(SplitGraph::from_json(&read_file(path)?, table.schema())?));
    }
    if let Some(text) = &source.model {
        return Ok(Model::Class(GeneratingClass::parse(text, table.schema())?));
    }
    if let Some(text) = &source.graph {
        return Ok(Model::Split(SplitGraph::new(parse_graph(table, text)?)));
    }
    Err(Failure::Usage("one of --model-file, --model or --graph is required".into()))
}

/// File-name friendly context, e.g. "C=1,D=2" becomes "C=1_D=2".
fn context_tag(ctx: &str) -> String {
    if ctx.is_empty() {
        "empty".into()
    } else {
        ctx.chars()
            .map(|c| if c.is_alphanumeric() || c == '=' || c == '-' || c == '.' { c } else { '_' })
            .collect()
    }
}

fn emit_dots(out: &DotOut, docs: Vec<(String, String)>) -> Outcome {
    match &out.out_dir {
        None => Ok(docs.into_iter().map(|(_, d)| d).collect::<Vec<_>>().join("\n")),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
            let mut listing = String::new();
            for (tag, doc) in docs {
                let path = dir.join(format!("{}.{}.dot", out.stem, tag));
                std::fs::write(&path, doc).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                let _ = writeln!(listing, "{}", path.display());
            }
            Ok(listing)
        }
    }
}

fn cmd_instantiate(common: &Common, source: &ModelSource, contexts: &[String], all: Option<&str>, eliminate: bool, out: &DotOut) -> Outcome {
    let table = load_table(common)?;
    let schema = table.schema();
    let class = match load_model(&table, source)? {
        Model::Class(c) => c,
        Model::Split(sg) => sg.generating_class(schema)?,
    };
    let mut ctxs = Vec::new();
    for c in contexts {
        ctxs.push(Context::parse(c, schema)?);
    }
    if let Some(vars) = all {
        ctxs.extend(select::all_contexts(schema, &parse_set(&table, vars)?)?);
    }
    if ctxs.is_empty() {
        ctxs.push(Context::new());
    }
    let mut docs = Vec::new();
    for ctx in &ctxs {
        let g = class.instantiate(schema, ctx, eliminate)?;
        let shown = ctx.display(schema);
        let label = if shown.is_empty() { None } else { Some(shown.as_str()) };
        docs.push((context_tag(&shown), g.to_dot(&out.stem, label)));
    }
    if common.format == Format::Json {
        let graphs: Vec<serde_json::Value> = ctxs
            .iter()
            .map(|ctx| {
                let g = class.instantiate(schema, ctx, eliminate).expect("instantiated above");
                json!({ "context": ctx.display(schema), "graph": g })
            })
            .collect();
        let files = emit_dots(out, docs)?;
        let mut doc = json!({ "graphs": graphs });
        if out.out_dir.is_some() {
            doc["files"] = json!(files.lines().collect::<Vec<_>>());
        }
        return Ok(json_text(doc));
    }
    emit_dots(out, docs)
}

fn cmd_export_dot(common: &Common, source: &ModelSource, out: &DotOut) -> Outcome {
    let table = load_table(common)?;
    let schema = table.schema();
    let docs = match load_model(&table, source)? {
        Model::Class(c) => vec![("graph".to_string(), c.interaction_graph(schema)?.to_dot(&out.stem, None))],
        Model::Split(sg) => {
            let mut docs = vec![("graph".to_string(), sg.graph().to_dot(&out.stem, None))];
            for (path, node) in sg.nodes().into_iter().skip(1) {
                let _ = path;
                let shown = node.context().display(schema);
                docs.push((context_tag(&shown), node.graph().to_dot(&out.stem, Some(&shown))));
            }
            docs
        }
    };
    emit_dots(out, docs)
}

fn cmd_summary(common: &Common, sel: &Selection, split: &SplitArgs, model_file: Option<&Path>) -> Outcome {
    let table = load_table(common)?;
    let sg = match model_file {
        Some(path) => SplitGraph::from_json(&read_file(path)?, table.schema())?,
        None => {
            let opts = options(&table, sel, Some(split))?;
            let g = selected_graph(&table, &opts, None)?;
            select::split_drop_least(&table, &g, &opts)?.model
        }
    };
    let rep = select::summary(&table, &sg)?;
    Ok(match common.format {
        Format::Text => {
            let mut s = format!("{}\n", report::HEADER);
            for t in &rep.trees {
                let _ = writeln!(s, "tree {}", t.label);
                for row in t.rows.iter().chain(std::iter::once(&t.total)) {
                    let _ = writeln!(s, "{}", report::row(row));
                }
            }
            let _ = writeln!(s, "graph");
            let _ = writeln!(s, "{}", report::row(&rep.graph));
            let _ = writeln!(s, "{}", report::row(&rep.total));
            s
        }
        Format::Json => json_text(json!({
            "summary": rep,
            "graph": cliques_text_in(table.schema(), &sg.graph().cliques()),
        })),
    })
}
