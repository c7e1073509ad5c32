// mmvu: command-line front end for the evaluation harness.
//
// Exit codes: 0 success, 1 validation failure, 2 transport failure,
// 3 usage error. Diagnostics go to stderr; data goes to files or stdout.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmvu/mmvu.hpp"

#ifndef MMVU_DEFAULT_PROMPT_DIR
#define MMVU_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace fs = std::filesystem;
using namespace mmvu;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitTransport = 2;
constexpr int kExitUsage = 3;

std::vector<ItemPair> load_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open benchmark " + path.string());
  try {
    return pair_items(parse_benchmark(in));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<OutcomeRecord> load_outcomes(const fs::path& path, const std::vector<ItemPair>& pairs) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open outcomes " + path.string());
  try {
    return align_outcomes(pairs, read_outcomes(in));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

ReplayTransport load_responses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open responses " + path.string());
  return ReplayTransport::from_stream(in, path.parent_path());
}

nlohmann::json load_json(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ValidationError(std::string("cannot open ") + what + " " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON (" + e.what() + ")");
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  return out;
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    std::cout << data;
    return;
  }
  auto out = open_out(path);
  out << data;
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Transport flags shared by eval and gen.
struct TransportFlags {
  std::string replay;
  std::string endpoint;
  std::string dump_dir = "dumps";
  CLI::Option* replay_opt = nullptr;
  CLI::Option* endpoint_opt = nullptr;

  void add(CLI::App* cmd) {
    replay_opt = cmd->add_option("--replay", replay, "Replay log (JSONL) to serve responses from");
    endpoint_opt = cmd->add_option("--endpoint", endpoint, "Base URL of a live model endpoint");
    replay_opt->excludes(endpoint_opt);
    cmd->add_option("--dump-dir", dump_dir, "Where attention dumps returned by the endpoint are stored")
        ->capture_default_str();
  }

  std::unique_ptr<Transport> open(const ConfigResolver& cfg) {
    const bool flagged = replay_opt->count() || endpoint_opt->count();
    if (!flagged) {
      cfg.apply("replay", false, replay);
      cfg.apply("endpoint", false, endpoint);
    }
    if (!replay.empty() && !endpoint.empty())
      throw UsageError("--replay and --endpoint are mutually exclusive");
    if (!replay.empty()) return std::make_unique<ReplayTransport>(ReplayTransport::from_file(replay));
    if (!endpoint.empty()) {
      HttpEndpoint ep;
      ep.base_url = endpoint;
      ep.dump_dir = dump_dir;
      if (auto token = ConfigResolver::process_env("MMVU_API_TOKEN")) ep.bearer_token = *token;
      return std::make_unique<HttpTransport>(ep);
    }
    throw UsageError("one of --replay or --endpoint is required");
  }
};

struct VarFlags {
  VarParams params;
  CLI::Option *alpha = nullptr, *beta = nullptr, *sigma = nullptr, *kernel = nullptr, *no_invert = nullptr;

  void add(CLI::App* cmd) {
    alpha = cmd->add_option("--alpha", params.alpha, "Image weight")->capture_default_str();
    beta = cmd->add_option("--beta", params.beta, "Mask weight")->capture_default_str();
    sigma = cmd->add_option("--sigma", params.sigma, "Gaussian blur sigma")->capture_default_str();
    kernel = cmd->add_option("--kernel", params.kernel, "Gaussian kernel size (odd)")->capture_default_str();
    no_invert = cmd->add_flag("--no-invert", "Blend the attention map without inverting it");
  }

  VarParams resolve(const ConfigResolver& cfg) {
    cfg.apply("alpha", alpha->count() > 0, params.alpha);
    cfg.apply("beta", beta->count() > 0, params.beta);
    cfg.apply("sigma", sigma->count() > 0, params.sigma);
    cfg.apply("kernel", kernel->count() > 0, params.kernel);
    bool no_inv = no_invert->count() > 0;
    cfg.apply("no_invert", no_inv, no_inv);
    params.invert = !no_inv;
    params.validate();
    return params;
  }
};

// ---------------------------------------------------------------------------

struct ValidateCmd {
  std::string bench;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("validate", "Parse and pair a benchmark file");
    cmd->add_option("--bench", bench, "Benchmark JSONL")->required();
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto pairs = load_pairs(bench);
    std::set<Category> touched;
    for (const auto& p : pairs) touched.insert(p.category());
    std::cout << pairs.size() << " pairs, " << touched.size() << " categories touched\n";
  }
};

struct EvalCmd {
  std::string bench, strategy = "baseline", images_root, prompts = MMVU_DEFAULT_PROMPT_DIR;
  std::string out_outcomes, out_responses;
  std::size_t workers = 4;
  double max_error_rate = 0.10;
  TransportFlags transport;
  VarFlags var;
  CLI::Option *strategy_opt, *workers_opt, *images_opt, *prompts_opt, *rate_opt, *no_image_opt;

  void add(CLI::App& app, std::function<void()>& run, const std::function<ConfigResolver()>& config) {
    auto* cmd = app.add_subcommand("eval", "Evaluate a model on benchmark pairs");
    cmd->add_option("--bench", bench, "Benchmark JSONL")->required();
    transport.add(cmd);
    strategy_opt = cmd->add_option("--strategy", strategy, "baseline, instruction, cgr, var or cgr+var")
                       ->capture_default_str();
    no_image_opt = cmd->add_flag("--no-image", "Send questions without the image");
    workers_opt = cmd->add_option("--workers", workers, "Concurrent requests")->capture_default_str();
    images_opt = cmd->add_option("--images-root", images_root, "Directory image paths resolve against "
                                                               "(default: the benchmark's directory)");
    prompts_opt = cmd->add_option("--prompts", prompts, "Prompt template directory")->capture_default_str();
    rate_opt = cmd->add_option("--max-error-rate", max_error_rate, "Abort above this fraction of failed items")
                   ->capture_default_str();
    cmd->add_option("--out-outcomes", out_outcomes, "Outcomes JSONL to write")->required();
    cmd->add_option("--out-responses", out_responses, "Responses JSONL to write (replay format)");
    var.add(cmd);
    cmd->callback([this, &run, config] { run = [this, config] { exec(config()); }; });
  }

  void exec(const ConfigResolver& cfg) {
    cfg.apply("strategy", strategy_opt->count() > 0, strategy);
    cfg.apply("workers", workers_opt->count() > 0, workers);
    cfg.apply("images_root", images_opt->count() > 0, images_root);
    cfg.apply("prompts", prompts_opt->count() > 0, prompts);
    cfg.apply("max_error_rate", rate_opt->count() > 0, max_error_rate);
    bool no_image = no_image_opt->count() > 0;
    cfg.apply("no_image", no_image, no_image);

    auto kind = parse_strategy(strategy);
    if (!kind) throw UsageError("unknown strategy \"" + strategy + "\"");
    if (workers < 1) throw UsageError("--workers must be >= 1");
    EvalConfig ec;
    ec.strategy = {*kind, no_image};
    ec.strategy.validate();
    if (ec.strategy.uses_var()) ec.var = var.resolve(cfg);
    ec.workers = workers;
    ec.max_error_rate = max_error_rate;

    const auto pairs = load_pairs(bench);
    ec.image_root = images_root.empty() ? fs::path(bench).parent_path() : fs::path(images_root);
    ec.assets = PromptAssets::load(prompts);
    auto t = transport.open(cfg);

    const auto run = run_eval(pairs, ec, *t);
    {
      auto out = open_out(out_outcomes);
      write_outcomes(outcome_records(run), out);
    }
    if (!out_responses.empty()) {
      auto out = open_out(out_responses);
      write_responses(run, out, fs::path(out_responses).parent_path());
    }
    for (const auto& p : run.pairs)
      for (const auto* item : {&p.pos, &p.neg})
        if (item->error) std::cerr << "mmvu: item in pair " << p.pair.pair_id << " failed: " << *item->error << "\n";
    std::cerr << "mmvu: " << run.pairs.size() << " pairs evaluated, " << run.errored_items << " items failed, "
              << run.unparseable_items << " unparseable\n";
  }
};

struct MetricsCmd {
  std::string bench, outcomes, out_dir = ".", analysis;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("metrics", "Compute RA/MR and write report files");
    cmd->add_option("--bench", bench, "Benchmark JSONL")->required();
    cmd->add_option("--outcomes", outcomes, "Outcomes JSONL")->required();
    cmd->add_option("--out-dir", out_dir, "Directory for report.md, report.csv, metrics.json")
        ->capture_default_str();
    cmd->add_option("--analysis", analysis, "Analysis JSON to include in report.md");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto pairs = load_pairs(bench);
    const auto records = load_outcomes(outcomes, pairs);
    std::vector<std::pair<Category, PairOutcome>> v;
    ParseTally tally{0, pairs.size() * 2};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      v.emplace_back(pairs[i].category(), records[i].outcome);
      tally.unparseable += !records[i].pos_choice + !records[i].neg_choice;
    }
    auto report = build_report(v);
    report.parse_tally = tally;
    std::optional<AnalysisOutput> a;
    if (!analysis.empty()) a = analysis_from_json(load_json(analysis, "analysis"));
    const auto rendered = render(report, a);
    const fs::path dir(out_dir);
    emit((dir / "report.md").string(), rendered.markdown);
    emit((dir / "report.csv").string(), rendered.csv);
    emit((dir / "metrics.json").string(), dump_json(to_json(report)));
    std::cerr << "mmvu: RA " << format_percent(report.micro.ra) << ", MR " << format_percent(report.micro.mr)
              << " over " << pairs.size() << " pairs\n";
  }
};

struct AttnCmd {
  std::string bench, responses, outcomes, tag = std::string(kTagMain), out;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("attn", "Attention statistics from recorded dumps");
    cmd->add_option("--bench", bench, "Benchmark JSONL")->required();
    cmd->add_option("--responses", responses, "Responses JSONL (replay format)")->required();
    cmd->add_option("--outcomes", outcomes, "Outcomes JSONL; adds the UF confidence summary");
    cmd->add_option("--tag", tag, "Response tag whose dumps are analysed")->capture_default_str();
    cmd->add_option("--out", out, "Output JSON (default: stdout)");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto pairs = load_pairs(bench);
    const auto log = load_responses(responses);
    std::vector<AnswerAttentionScores> scores;
    std::vector<std::optional<PairAttentionRatios>> ratios;
    for (const auto& p : pairs) {
      std::optional<QuestionAttentionBound> bounds[2];
      int side = 0;
      for (const auto* item : {&p.positive, &p.negative}) {
        const auto* r = log.find(item->item_id, tag);
        if (r && r->attention_ref) {
          const auto dump = read_attention_dump(*r->attention_ref);
          const auto a = average_heads(dump);
          scores.push_back(answer_attention_scores(a, dump.segments));
          bounds[side] = question_attention_bound(a, dump.segments);
        }
        ++side;
      }
      ratios.push_back(bounds[0] && bounds[1] ? pair_attention_ratios(*bounds[0], *bounds[1]) : std::nullopt);
    }
    AnalysisOutput a;
    a.answer_attention = summarize_answer_attention(scores);
    a.ratio_summary = summarize_ratios(ratios);
    if (!outcomes.empty()) a.uf_confidence = uf_summary(pairs, load_outcomes(outcomes, pairs), log);
    emit(out, dump_json(to_json(a)));
  }

  static UfConfidenceSummary uf_summary(const std::vector<ItemPair>& pairs, const std::vector<OutcomeRecord>& recs,
                                        const ReplayTransport& log) {
    std::vector<LogitPair> lp;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      LogitPair x{p.pair_id, recs[i].outcome, p.positive.answer, p.negative.answer, std::nullopt, std::nullopt};
      if (const auto* r = log.find(p.positive.item_id, std::string(kTagMain))) x.pos_logits = r->option_logits;
      if (const auto* r = log.find(p.negative.item_id, std::string(kTagMain))) x.neg_logits = r->option_logits;
      lp.push_back(std::move(x));
    }
    return aggregate_uf_ratios(lp);
  }
};

struct LogitsCmd {
  std::string bench, responses, outcomes, out;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("logits", "Confidence ratio over UF pairs");
    cmd->add_option("--bench", bench, "Benchmark JSONL")->required();
    cmd->add_option("--responses", responses, "Responses JSONL (replay format)")->required();
    cmd->add_option("--outcomes", outcomes, "Outcomes JSONL")->required();
    cmd->add_option("--out", out, "Output JSON (default: stdout)");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto pairs = load_pairs(bench);
    const auto log = load_responses(responses);
    const auto s = AttnCmd::uf_summary(pairs, load_outcomes(outcomes, pairs), log);
    nlohmann::ordered_json j;
    j["uf_confidence"] = to_json(s, true);
    emit(out, dump_json(j));
  }
};

struct VarCmd {
  std::string image, dump, out;
  VarFlags var;

  void add(CLI::App& app, std::function<void()>& run, const std::function<ConfigResolver()>& config) {
    auto* cmd = app.add_subcommand("var", "Refine an image with its question-to-visual attention");
    cmd->add_option("--image", image, "Input PNG")->required();
    cmd->add_option("--dump", dump, "Attention dump")->required();
    cmd->add_option("--out", out, "Output PNG; parameters go to <out>.json")->required();
    var.add(cmd);
    cmd->callback([this, &run, config] { run = [this, config] { exec(config()); }; });
  }

  void exec(const ConfigResolver& cfg) {
    const auto params = var.resolve(cfg);
    const auto img = read_png(image);
    const auto d = read_attention_dump(fs::path(dump));
    const auto refined = refine_image(img, d, params);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_png(refined, out);
    nlohmann::ordered_json j;
    j["image"] = image;
    j["dump"] = dump;
    j["width"] = refined.width;
    j["height"] = refined.height;
    j["alpha"] = params.alpha;
    j["beta"] = params.beta;
    j["sigma"] = params.sigma;
    j["kernel"] = params.kernel;
    j["invert"] = params.invert;
    j["normalization"] = "min_max";
    j["reduction"] = "max_over_question_rows";
    emit(out + ".json", dump_json(j));
  }
};

nlohmann::ordered_json dataset_report(std::size_t generated, std::size_t skipped, const FilterResult& f) {
  nlohmann::ordered_json j;
  j["generated"] = generated;
  j["skipped"] = skipped;
  j["rounds_removed"] = f.rounds_removed;
  j["phrases_stripped"] = f.phrases_stripped();
  j["phrases_stripped_human"] = f.phrases_stripped_human;
  j["phrases_stripped_gpt"] = f.phrases_stripped_gpt;
  j["samples_removed"] = f.removed.size();
  j["samples_kept"] = f.kept.size();
  return j;
}

std::string report_path_for(const std::string& out, const std::string& given) {
  if (!given.empty()) return given;
  fs::path p(out);
  return (p.parent_path() / (p.stem().string() + ".report.json")).string();
}

struct GenCmd {
  std::vector<std::string> images;
  std::string images_dir, version = "v3", prompts = MMVU_DEFAULT_PROMPT_DIR, out = "dataset.json", report;
  std::size_t workers = 4;
  bool drop_on_phrase = false;
  TransportFlags transport;
  CLI::Option *workers_opt, *prompts_opt, *version_opt;

  void add(CLI::App& app, std::function<void()>& run, const std::function<ConfigResolver()>& config) {
    auto* cmd = app.add_subcommand("gen", "Generate paired training samples from images");
    auto* img = cmd->add_option("--image", images, "Input image (repeatable)");
    auto* dir = cmd->add_option("--images-dir", images_dir, "Use every .png/.jpg/.jpeg in this directory");
    img->excludes(dir);
    version_opt = cmd->add_option("--prompt-version", version, "Prompt version v0..v3")->capture_default_str();
    prompts_opt = cmd->add_option("--prompts", prompts, "Prompt template directory")->capture_default_str();
    workers_opt = cmd->add_option("--workers", workers, "Concurrent requests")->capture_default_str();
    cmd->add_flag("--drop-on-phrase", drop_on_phrase, "Drop rounds containing the redundant phrase");
    cmd->add_option("--out", out, "Dataset JSON")->capture_default_str();
    cmd->add_option("--report", report, "Count report (default: <out stem>.report.json)");
    transport.add(cmd);
    cmd->callback([this, &run, config] { run = [this, config] { exec(config()); }; });
  }

  void exec(const ConfigResolver& cfg) {
    cfg.apply("workers", workers_opt->count() > 0, workers);
    cfg.apply("prompts", prompts_opt->count() > 0, prompts);
    cfg.apply("gen_version", version_opt->count() > 0, version);
    auto v = parse_prompt_version(version);
    if (!v) throw UsageError("unknown prompt version \"" + version + "\"");
    if (workers < 1) throw UsageError("--workers must be >= 1");

    std::vector<fs::path> paths(images.begin(), images.end());
    if (!images_dir.empty()) {
      if (!fs::is_directory(images_dir)) throw ValidationError("not a directory: " + images_dir);
      for (const auto& e : fs::directory_iterator(images_dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) paths.push_back(e.path());
      }
      std::sort(paths.begin(), paths.end());
    }
    auto t = transport.open(cfg);
    GenerationConfig gc{*v, prompts, workers};
    const auto result = generate_samples(paths, gc, *t);
    for (const auto& [image, err] : result.skipped) std::cerr << "mmvu: skipped " << image << ": " << err << "\n";
    const auto filtered = filter_samples(result.samples, {drop_on_phrase});
    {
      auto o = open_out(out);
      write_training_json(filtered.kept, o);
    }
    emit(report_path_for(out, report), dump_json(dataset_report(result.samples.size(), result.skipped.size(), filtered)));
    std::cerr << "mmvu: " << result.samples.size() << " generated, " << result.skipped.size() << " skipped, "
              << filtered.kept.size() << " kept\n";
  }
};

struct FilterCmd {
  std::string in, out, report;
  bool drop_on_phrase = false;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("filter", "Remove uncertain rounds and redundant phrases");
    cmd->add_option("--in", in, "Dataset JSON")->required();
    cmd->add_option("--out", out, "Filtered dataset JSON")->required();
    cmd->add_option("--report", report, "Count report (default: <out stem>.report.json)");
    cmd->add_flag("--drop-on-phrase", drop_on_phrase, "Drop rounds containing the redundant phrase");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto samples = read_training_json(fs::path(in));
    const auto filtered = filter_samples(samples, {drop_on_phrase});
    {
      auto o = open_out(out);
      write_training_json(filtered.kept, o);
    }
    emit(report_path_for(out, report), dump_json(dataset_report(samples.size(), 0, filtered)));
  }
};

struct ComposeCmd {
  std::string base, extra, strategy, out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt;

  void add(CLI::App& app, std::function<void()>& run, const std::function<ConfigResolver()>& config) {
    auto* cmd = app.add_subcommand("compose", "Compose a training set from base and extra samples");
    cmd->add_option("--base", base, "Base dataset JSON")->required();
    cmd->add_option("--extra", extra, "Extra dataset JSON");
    cmd->add_option("--strategy", strategy, "concat:1|2|4|all, combine or replace:N")->required();
    seed_opt = cmd->add_option("--seed", seed, "Seed for replace sampling")->capture_default_str();
    cmd->add_option("--out", out, "Output dataset JSON")->required();
    cmd->callback([this, &run, config] { run = [this, config] { exec(config()); }; });
  }

  void exec(const ConfigResolver& cfg) {
    cfg.apply("seed", seed_opt->count() > 0, seed);
    const auto s = CompositionStrategy::parse(strategy);
    const auto b = read_training_json(fs::path(base));
    const auto e = extra.empty() ? std::vector<GeneratedSample>{} : read_training_json(fs::path(extra));
    const auto composed = compose(b, e, s, seed);
    auto o = open_out(out);
    write_training_json(composed, o);
  }
};

struct ReportCmd {
  std::string metrics, analysis, out_dir, golden;

  void add(CLI::App& app, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("report", "Render report files from metrics.json");
    cmd->add_option("--metrics", metrics, "metrics.json written by the metrics command")->required();
    cmd->add_option("--analysis", analysis, "Analysis JSON to include");
    cmd->add_option("--out-dir", out_dir, "Write report.md and report.csv here");
    cmd->add_option("--golden", golden, "Compare the rendered report.md byte-exactly with this file");
    cmd->callback([this, &run] { run = [this] { exec(); }; });
  }

  void exec() {
    const auto report = metrics_from_json(load_json(metrics, "metrics"));
    std::optional<AnalysisOutput> a;
    if (!analysis.empty()) a = analysis_from_json(load_json(analysis, "analysis"));
    const auto rendered = render(report, a);
    if (!out_dir.empty()) {
      emit((fs::path(out_dir) / "report.md").string(), rendered.markdown);
      emit((fs::path(out_dir) / "report.csv").string(), rendered.csv);
    }
    if (!golden.empty()) {
      const auto diff = compare_golden(rendered.markdown, read_file_bytes(golden));
      if (!diff.equal) throw ValidationError("report differs from " + golden + ": " + diff.describe());
      std::cerr << "mmvu: report matches " << golden << "\n";
    }
    if (out_dir.empty() && golden.empty()) std::cout << rendered.markdown;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Misleading-question robustness harness for multimodal models", "mmvu"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags > MMVU_* environment > config file)");

  auto config = [&config_path] {
    return config_path.empty() ? ConfigResolver() : ConfigResolver(fs::path(config_path));
  };

  std::function<void()> run;
  ValidateCmd validate;
  EvalCmd eval;
  MetricsCmd metrics;
  AttnCmd attn;
  LogitsCmd logits;
  VarCmd var;
  GenCmd gen;
  FilterCmd filter;
  ComposeCmd compose;
  ReportCmd report;
  validate.add(app, run);
  eval.add(app, run, config);
  metrics.add(app, run);
  attn.add(app, run);
  logits.add(app, run);
  var.add(app, run, config);
  gen.add(app, run, config);
  filter.add(app, run);
  compose.add(app, run, config);
  report.add(app, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mmvu: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (run) run();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "mmvu: usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TransportError& e) {
    std::cerr << "mmvu: transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const ValidationError& e) {
    std::cerr << "mmvu: validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "mmvu: error: " << e.what() << "\n";
    return kExitValidation;
  }
}
