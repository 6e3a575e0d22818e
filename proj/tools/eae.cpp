// eae: command-line front end for the extraction harness.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "eae/error.hpp"
#include "eae/runner.hpp"

namespace fs = std::filesystem;
using namespace eae;

namespace {

int cmd_run(const fs::path& config_path) {
    const auto config = runner::load_config(config_path);
    const auto outcome = runner::run_experiment(config);
    const auto& m = outcome.manifest;
    const auto counts = m.status_counts();
    std::cout << "sampled " << m.n_sampled << " documents (" << m.resumed_records << " events resumed)\n"
              << "status: ok=" << counts.at("ok") << " parse_empty=" << counts.at("parse_empty")
              << " provider_error=" << counts.at("provider_error") << "\n"
              << "provider: dispatches=" << m.ledger.dispatches << " cache_hits=" << outcome.client.cache_hits
              << " retries=" << outcome.client.retries << "\n"
              << "Arg-I F1 " << runner::format_centi(runner::to_centi_percent(m.report.arg_i.f1)) << "  Arg-C F1 "
              << runner::format_centi(runner::to_centi_percent(m.report.arg_c.f1)) << "\n"
              << "wrote " << config.output_dir.string() << "\n";
    return 0;
}

int cmd_score(const fs::path& pred, const fs::path& gold, const std::string& mode, const std::string& label,
              const std::optional<fs::path>& out) {
    const auto records = extract::load_predictions(pred);
    const auto docs = corpus::load_dump(gold);
    auto report = score::score_corpus(records, docs, score::match_mode_from_string(mode));
    report.dataset = label;
    const auto j = score::to_json(report).dump(2);
    if (out) {
        std::ofstream f(*out, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write '" + out->string() + "'");
        f << j << "\n";
    }
    std::cout << j << "\n";
    return 0;
}

score::ScoreReport read_report(const fs::path& run_dir) {
    const fs::path p = fs::is_directory(run_dir) ? run_dir / "report.json" : run_dir;
    std::ifstream in(p);
    if (!in) throw IoError("cannot read report '" + p.string() + "'");
    try {
        return score::report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(1, p.string() + ": " + e.what());
    }
}

int cmd_report(const std::vector<std::string>& runs, const std::optional<fs::path>& baselines, const std::string& format) {
    std::vector<score::ScoreReport> reports;
    for (const auto& r : runs) reports.push_back(read_report(r));
    std::vector<runner::BaselineLiteral> lits;
    if (baselines) lits = runner::load_baselines(*baselines);
    std::cout << runner::render_report(reports, lits,
                                       format == "csv" ? runner::ReportFormat::csv : runner::ReportFormat::markdown);
    return 0;
}

int cmd_compare(const std::string& baseline, const std::string& treatment) {
    std::cout << runner::compare_reports(read_report(baseline), read_report(treatment)).to_markdown();
    return 0;
}

int cmd_cache(const std::string& action, const fs::path& dir) {
    auto cache = llm::ResponseCache::open(dir);
    if (action == "clear") {
        const auto n = cache.size();
        cache.clear();
        std::cout << "removed " << n << " entries from " << dir.string() << "\n";
    } else {
        std::cout << "dir: " << dir.string() << "\nentries: " << cache.size() << "\nbytes: " << cache.data_bytes() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Document-level event argument extraction with prompted LLMs"};
    app.require_subcommand(1);

    fs::path config_path;
    auto* run = app.add_subcommand("run", "Run one configured experiment");
    run->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);

    fs::path pred, gold;
    std::string mode = "exact";
    std::string label = "custom";
    std::optional<fs::path> out;
    auto* sc = app.add_subcommand("score", "Score a predictions file against a gold dump");
    sc->add_option("--pred", pred, "predictions.jsonl")->required()->check(CLI::ExistingFile);
    sc->add_option("--gold", gold, "gold.jsonl written by a run")->required()->check(CLI::ExistingFile);
    sc->add_option("--mode", mode, "exact or head")->check(CLI::IsMember({"exact", "head"}));
    sc->add_option("--dataset", label, "dataset label for the report");
    sc->add_option("--out", out, "also write the report JSON here");

    std::vector<std::string> runs;
    std::optional<fs::path> baselines;
    std::string format = "md";
    auto* rep = app.add_subcommand("report", "Render a results table from run directories");
    rep->add_option("--runs", runs, "run directories or report.json files")->required()->delimiter(',');
    rep->add_option("--baselines", baselines, "quoted literature numbers")->check(CLI::ExistingFile);
    rep->add_option("--format", format, "md or csv")->check(CLI::IsMember({"md", "csv"}));

    std::string base_run, treat_run;
    auto* cmp = app.add_subcommand("compare", "Delta table between two runs");
    cmp->add_option("--baseline", base_run, "baseline run directory")->required();
    cmp->add_option("--treatment", treat_run, "treatment run directory")->required();

    std::string action;
    fs::path cache_dir = ".eae_cache";
    auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
    cache->add_option("action", action, "stats or clear")->required()->check(CLI::IsMember({"stats", "clear"}));
    cache->add_option("--dir", cache_dir, "cache directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path);
        if (*sc) return cmd_score(pred, gold, mode, label, out);
        if (*rep) return cmd_report(runs, baselines, format);
        if (*cmp) return cmd_compare(base_run, treat_run);
        if (*cache) return cmd_cache(action, cache_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return runner::exit_code_for(e);
    }
    return 1;
}
