//! Single binary over the linking pipeline: synthetic data generation,
//! network-embedding training, homophily analysis, model training, decoding,
//! evaluation, and system comparison.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error.
//! Diagnostics (including each run's resolved configuration) go to stderr;
//! data goes to stdout or `--out`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use tweetlink_core::{
    bootstrap_compare, evaluate, generate_synthetic, homophily_report, link_corpus, load_corpus,
    load_graph, load_links, load_profiles, profiles_from_corpus, save_corpus, save_links,
    save_profiles, train, train_line2, DefaultFeatures, EmbeddingTable, HomophilyConfig, Lexicon,
    Model, NetEmbedConfig, SynthConfig, TableKind, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "tweetlink",
    version,
    about = "Structured entity linking for short texts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic corpus, lexicon, author graph, and embeddings
    Synth(SynthArgs),
    /// Train user embeddings from a social graph
    EmbedNetwork(EmbedArgs),
    /// Entity-homophily report: connected vs disconnected similarity
    Homophily(HomophilyArgs),
    /// Train a linking model with loss-augmented max-margin SGD
    Train(TrainArgs),
    /// Decode a corpus into non-overlapping entity links
    Link(LinkArgs),
    /// Score predicted links against gold annotations
    Eval(EvalArgs),
    /// Paired bootstrap significance test between two systems
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    users: usize,
    #[arg(long, default_value_t = 24)]
    entities: usize,
    #[arg(long, default_value_t = 2)]
    communities: usize,
    #[arg(long, default_value_t = 20)]
    tweets_per_user: usize,
    /// Fraction of entity groups sharing an ambiguous surface form
    #[arg(long, default_value_t = 0.5)]
    ambiguity: f64,
    #[arg(long, default_value_t = 2)]
    mentions_per_tweet: usize,
    #[arg(long, default_value_t = 50)]
    filler_vocab: usize,
    #[arg(long, default_value_t = 50)]
    word_dim: usize,
    #[arg(long, default_value_t = 50)]
    entity_dim: usize,
    /// Within-community edge probability of the author graph
    #[arg(long, default_value_t = 0.3)]
    p_in: f64,
    /// Cross-community edge probability
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,
    #[arg(long, default_value_t = 0.3)]
    entity_noise: f64,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    dev_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    /// Total edge samples; 0 = 1000 per edge (capped)
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// >1 enables lock-free parallel updates (not seed-reproducible)
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct HomophilyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    /// Disconnected pairs sampled when the graph exceeds --exact-threshold
    #[arg(long, default_value_t = 1_000_000)]
    sample_pairs: usize,
    #[arg(long, default_value_t = 3000)]
    exact_threshold: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    user_emb: PathBuf,
    #[arg(long)]
    word_emb: PathBuf,
    #[arg(long)]
    entity_emb: PathBuf,
    /// Flat key=value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the trained model
    #[arg(long)]
    out: PathBuf,
    /// Training log TSV (default: stdout)
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hamming_weight: Option<f64>,
    #[arg(long)]
    l2_comp: Option<f64>,
    #[arg(long)]
    l2_mlp: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// MLP hidden units
    #[arg(long, default_value_t = 40)]
    hidden: usize,
    /// Disable the user-entity bilinear term
    #[arg(long)]
    no_user_entity: bool,
    /// Disable the mention-entity bilinear term
    #[arg(long)]
    no_mention_entity: bool,
}

#[derive(Args, Debug)]
struct LinkArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read-only decoding fan-out; output is identical for any value
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Gold corpus (jsonl)
    #[arg(long)]
    gold: PathBuf,
    /// Predicted links (jsonl from `link`)
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred_a: PathBuf,
    #[arg(long)]
    pred_b: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::EmbedNetwork(args) => run_embed(args),
        Command::Homophily(args) => run_homophily(args),
        Command::Train(args) => run_train(args),
        Command::Link(args) => run_link(args),
        Command::Eval(args) => run_eval(args),
        Command::Compare(args) => run_compare(args),
    }
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    if !(0.0..=1.0).contains(&args.train_frac)
        || !(0.0..=1.0).contains(&args.dev_frac)
        || args.train_frac + args.dev_frac > 1.0
    {
        anyhow::bail!("train/dev fractions must be in [0,1] and sum to at most 1");
    }
    let config = SynthConfig {
        users: args.users,
        entities: args.entities,
        communities: args.communities,
        tweets_per_user: args.tweets_per_user,
        ambiguity: args.ambiguity,
        mentions_per_tweet: args.mentions_per_tweet,
        filler_vocab: args.filler_vocab,
        word_dim: args.word_dim,
        entity_dim: args.entity_dim,
        p_in: args.p_in,
        p_out: args.p_out,
        entity_noise: args.entity_noise,
    };
    let data = generate_synthetic(&config, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut order: Vec<usize> = (0..data.tweets.len()).collect();
    let mut rng = rand::rngs::StdRng::seed_from_u64(args.seed ^ 0x9e37_79b9_7f4a_7c15);
    order.shuffle(&mut rng);
    let n_train = (args.train_frac * order.len() as f64).round() as usize;
    let n_dev = (args.dev_frac * order.len() as f64).round() as usize;
    let pick = |range: &[usize]| -> Vec<tweetlink_core::Tweet> {
        range.iter().map(|&i| data.tweets[i].clone()).collect()
    };
    let train_set = pick(&order[..n_train]);
    let dev_set = pick(&order[n_train..(n_train + n_dev).min(order.len())]);
    let test_set = pick(&order[(n_train + n_dev).min(order.len())..]);

    save_corpus(&train_set, &args.out.join("train.jsonl"))?;
    save_corpus(&dev_set, &args.out.join("dev.jsonl"))?;
    save_corpus(&test_set, &args.out.join("test.jsonl"))?;
    data.lexicon.save(&args.out.join("lexicon.tsv"))?;
    data.graph.save(&args.out.join("graph.txt"))?;
    data.words.save(&args.out.join("word-emb.txt"))?;
    data.entities.save(&args.out.join("entity-emb.txt"))?;
    save_profiles(
        &profiles_from_corpus(&data.tweets),
        &args.out.join("profiles.tsv"),
    )?;

    eprintln!(
        "wrote {} train / {} dev / {} test tweets, {} lexicon surfaces, \
         {} users, {} graph edges to {}",
        train_set.len(),
        dev_set.len(),
        test_set.len(),
        data.lexicon.len(),
        args.users,
        data.graph.edge_count(),
        args.out.display()
    );
    Ok(())
}

fn run_embed(args: EmbedArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let graph = load_graph(&args.graph)?;
    if graph.skipped_self_loops() > 0 {
        eprintln!("warning: skipped {} self-loops", graph.skipped_self_loops());
    }
    let config = NetEmbedConfig {
        dim: args.dim,
        negative_samples: args.negatives,
        total_samples: args.samples,
        initial_lr: args.lr,
        seed: args.seed,
        threads: args.threads,
    };
    eprintln!(
        "training on {} nodes / {} edges with {} samples",
        graph.node_count(),
        graph.edge_count(),
        config.effective_samples(graph.edge_count())
    );
    let table = train_line2(&graph, &config)?;
    table.save(&args.out)?;
    eprintln!(
        "wrote {} vectors of dim {} to {}",
        table.len(),
        table.dim(),
        args.out.display()
    );
    Ok(())
}

fn run_homophily(args: HomophilyArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let graph = load_graph(&args.graph)?;
    let profiles = load_profiles(&args.profiles)?;
    let config = HomophilyConfig {
        exact_threshold: args.exact_threshold,
        sample_pairs: args.sample_pairs,
        seed: args.seed,
    };
    let report = homophily_report(&graph, &profiles, &config)?;
    if report.missing_profiles > 0 {
        eprintln!(
            "warning: {} graph nodes have no profile (scored as empty sets)",
            report.missing_profiles
        );
    }
    println!(
        "sim_connected\tsim_disconnected\tratio\tconnected_pairs\tdisconnected_pairs\tsampled"
    );
    println!(
        "{:.6}\t{:.6}\t{:.4}\t{}\t{}\t{}",
        report.sim_connected,
        report.sim_disconnected,
        report.ratio(),
        report.connected_pairs,
        report.disconnected_pairs,
        report.sampled
    );
    Ok(())
}

fn resolve_train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.hamming_weight {
        config.hamming_weight = v;
    }
    if let Some(v) = args.l2_comp {
        config.l2_comp = v;
    }
    if let Some(v) = args.l2_mlp {
        config.l2_mlp = v;
    }
    if let Some(v) = args.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.eval_every {
        config.eval_every = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    Ok(config)
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let config = resolve_train_config(&args)?;
    eprintln!("resolved training config: {config:?}");

    let train_set = load_corpus(&args.corpus)?;
    let dev_set = load_corpus(&args.dev)?;
    let lexicon = Lexicon::load(&args.lexicon)?;
    let users = EmbeddingTable::load(&args.user_emb, TableKind::User)?;
    let words = EmbeddingTable::load(&args.word_emb, TableKind::Word)?;
    let entities = EmbeddingTable::load(&args.entity_emb, TableKind::Entity)?;

    let model = Model::new(
        Arc::new(DefaultFeatures::new(lexicon.clone())),
        Arc::new(users),
        Arc::new(words),
        Arc::new(entities),
        args.hidden,
        !args.no_user_entity,
        !args.no_mention_entity,
        config.seed,
    )?;
    let state = train(model, &train_set, &dev_set, &lexicon, &config)?;

    let mut log: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(log, "epoch\tmean_loss\tdev_p\tdev_r\tdev_f1")?;
    for entry in &state.log {
        match entry.dev {
            Some(dev) => writeln!(
                log,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                entry.epoch, entry.mean_loss, dev.precision, dev.recall, dev.f1
            )?,
            None => writeln!(log, "{}\t{:.6}\tNA\tNA\tNA", entry.epoch, entry.mean_loss)?,
        }
    }
    log.flush()?;

    state.model.save(&args.out)?;
    eprintln!(
        "trained {} epochs; best dev F1 {:.4} at epoch {}; model written to {}",
        state.epochs_run,
        state.best_dev_f1,
        state.best_epoch,
        args.out.display()
    );
    Ok(())
}

fn run_link(args: LinkArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let lexicon = Lexicon::load(&args.lexicon)?;
    let model = Model::load(&args.model, Arc::new(DefaultFeatures::new(lexicon.clone())))?;
    let tweets = load_corpus(&args.corpus)?;
    let links = link_corpus(&model, &tweets, &lexicon, args.threads)?;
    match &args.out {
        Some(path) => save_links(&links, path)?,
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for record in &links {
                writeln!(out, "{}", serde_json::to_string(record)?)?;
            }
        }
    }
    let linked: usize = links.iter().map(|l| l.links.len()).sum();
    eprintln!("decoded {} tweets, {} links", links.len(), linked);
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let gold = load_corpus(&args.gold)?;
    let pred = load_links(&args.pred)?;
    let result = evaluate(&gold, &pred)?;
    let (n_pred, n_gold, n_correct) = result.totals();
    let (p, r, f1) = result.prf1();
    println!("n_pred\tn_gold\tn_correct\tprecision\trecall\tf1");
    println!("{n_pred}\t{n_gold}\t{n_correct}\t{p:.6}\t{r:.6}\t{f1:.6}");
    Ok(())
}

fn run_compare(args: CompareArgs) -> anyhow::Result<()> {
    eprintln!("config: {args:?}");
    let gold = load_corpus(&args.gold)?;
    let result_a = evaluate(&gold, &load_links(&args.pred_a)?)?;
    let result_b = evaluate(&gold, &load_links(&args.pred_b)?)?;
    let cmp = bootstrap_compare(&result_a, &result_b, args.samples, args.seed)?;
    let mean = |which: fn(&(f64, f64)) -> f64| {
        cmp.samples.iter().map(which).sum::<f64>() / cmp.samples.len() as f64
    };
    let (_, _, f1a) = result_a.prf1();
    let (_, _, f1b) = result_b.prf1();
    println!("f1_a\tf1_b\tmean_boot_f1_a\tmean_boot_f1_b\tt_statistic\tp_value");
    println!(
        "{f1a:.6}\t{f1b:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.6}",
        mean(|s| s.0),
        mean(|s| s.1),
        cmp.t_statistic,
        cmp.p_value
    );
    Ok(())
}
