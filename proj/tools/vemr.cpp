// vemr: record service and evaluation command line.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <filesystem>
#include <iostream>

#include "vemr/app.hpp"
#include "vemr/error.hpp"
#include "vemr/eval.hpp"
#include "vemr/store.hpp"
#include "vemr/text.hpp"

namespace fs = std::filesystem;
using namespace vemr;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

struct Common {
    std::string config;
    std::string data_dir;
    std::string resources;
    bool mock = false;
    std::string listen;
    std::string clock_start;
};

app::Config resolve(const Common& c) {
    auto cfg = app::load_config(c.config.empty() ? std::nullopt : std::optional<std::string>(c.config));
    if (!c.data_dir.empty()) cfg.data_dir = c.data_dir;
    if (!c.resources.empty()) cfg.resources_dir = c.resources;
    if (c.mock) cfg.mock_backends = true;
    if (!c.listen.empty()) cfg.listen = c.listen;
    if (!c.clock_start.empty()) {
        if (!app::parse_timestamp(c.clock_start)) throw ValidationError("bad --clock-start", "clock_start");
        cfg.clock_start = c.clock_start;
    }
    return cfg;
}

void emit(const std::string& out_path, const std::string& body) {
    if (out_path.empty()) {
        std::cout << body;
        return;
    }
    if (auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    text::write_file(out_path, body);
}

void require_dir(const std::string& path) {
    if (!fs::is_directory(path)) throw IoError("corpus directory not found: " + path);
}

int serve(const app::Config& cfg) {
    app::Runtime rt(cfg);
    const auto colon = cfg.listen.rfind(':');
    if (colon == std::string::npos) throw ValidationError("--listen must be host:port", "listen");
    const auto host = cfg.listen.substr(0, colon);
    const int port = std::stoi(cfg.listen.substr(colon + 1));
    auto server = service::make_http_server(rt.service());
    g_server = server.get();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "vemr: serving " << service::kBasePath << " on " << host << ":" << port
              << (cfg.mock_backends ? " (mock backends)" : "") << ", store " << cfg.data_dir << "\n";
    if (!server->listen(host, port)) throw IoError("cannot listen on " + cfg.listen);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Voice-to-EMR antenatal record service and evaluation tools"};
    cli.require_subcommand(1);
    Common common;
    cli.add_option("--config", common.config, "JSON config file")->check(CLI::ExistingFile);
    cli.add_option("--data-dir", common.data_dir, "Store directory (database and blobs)");
    cli.add_option("--resources", common.resources, "Resource directory (schema, lexicon, prompts, rules)");

    auto* serve_cmd = cli.add_subcommand("serve", "Run the network API");
    serve_cmd->add_flag("--mock-backends", common.mock, "Use fixture speech, language-model and ultrasound backends");
    serve_cmd->add_option("--listen", common.listen, "host:port");
    serve_cmd->add_option("--clock-start", common.clock_start, "Deterministic clock start, e.g. 2024-09-03T09:00:00Z");

    std::string corpus_src, corpus_name;
    auto* import_corpus = cli.add_subcommand("import-corpus", "Validate an evaluation corpus and copy it into the store");
    import_corpus->add_option("corpus", corpus_src, "Corpus bundle directory")->required();
    import_corpus->add_option("--name", corpus_name, "Name under <data-dir>/corpora (default: directory name)");

    std::string visit_id, out_path, archive_path;
    bool anonymize = false;
    auto* export_cmd = cli.add_subcommand("export-visit", "Write a finalized visit as a self-contained archive");
    export_cmd->add_option("visit_id", visit_id)->required();
    export_cmd->add_option("--out", out_path, "Output file (default stdout)");
    export_cmd->add_flag("--anonymize", anonymize, "Replace the patient name with a pseudonym");

    auto* import_visit = cli.add_subcommand("import-visit", "Verify and store a visit archive");
    import_visit->add_option("archive", archive_path)->required()->check(CLI::ExistingFile);

    auto* eval_cmd = cli.add_subcommand("eval", "Evaluation reports over a corpus bundle");
    eval_cmd->require_subcommand(1);
    std::string corpus, format = "text";
    eval::NormalizationOptions norm;
    bool no_casefold = false, no_strip = false;
    auto add_common = [&](CLI::App* sc) {
        sc->add_option("corpus", corpus, "Corpus bundle directory")->required();
        sc->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
        sc->add_option("--out", out_path, "Output file (default stdout)");
    };
    auto* wer_cmd = eval_cmd->add_subcommand("wer", "Word error rate per transcript pair");
    add_common(wer_cmd);
    wer_cmd->add_flag("--collapse-repetitions", norm.collapse_repetitions, "Collapse repeated n-grams on both sides");
    wer_cmd->add_flag("--canonicalize", norm.roman_urdu_canonicalize, "Collapse Roman-Urdu spelling variants");
    wer_cmd->add_flag("--no-casefold", no_casefold);
    wer_cmd->add_flag("--no-strip-punct", no_strip);
    auto* acc_cmd = eval_cmd->add_subcommand("accuracy", "Field accuracy of system EMRs against ground truth");
    add_common(acc_cmd);
    auto* cat_cmd = eval_cmd->add_subcommand("categorize", "Error categories from annotator labels");
    add_common(cat_cmd);
    auto* flags_cmd = eval_cmd->add_subcommand("flags", "Red-flag accuracy and relevance ratings");
    add_common(flags_cmd);
    auto* cross_cmd = eval_cmd->add_subcommand("cross-model", "Per-section accuracy across language-model backends");
    add_common(cross_cmd);

    CLI11_PARSE(cli, argc, argv);

    try {
        const auto cfg = resolve(common);
        if (serve_cmd->parsed()) return serve(cfg);

        if (import_corpus->parsed()) {
            require_dir(corpus_src);
            const auto res = app::load_resources(cfg.resources_dir);
            const auto pairs = eval::load_wer_pairs(corpus_src);
            const auto docs = eval::load_document_pairs(corpus_src, res.schema);
            const auto ratings = eval::load_flag_ratings(corpus_src);
            eval::rate_redflags(ratings.first, ratings.second);
            eval::categorize_corpus(corpus_src, res.schema);
            const auto runs = eval::load_model_runs(corpus_src, res.schema);
            if (!runs.empty()) eval::cross_model_report(runs);
            const auto name = corpus_name.empty() ? fs::path(corpus_src).lexically_normal().filename().string() : corpus_name;
            const auto dest = fs::path(cfg.data_dir) / "corpora" / name;
            if (fs::exists(dest)) throw ConflictError("corpus " + name + " already imported");
            fs::create_directories(dest.parent_path());
            fs::copy(corpus_src, dest, fs::copy_options::recursive);
            std::cout << "imported " << name << ": " << eval::patient_ids(corpus_src).size() << " patients, "
                      << pairs.size() << " transcript pairs, " << docs.size() << " EMR pairs, " << ratings.first.size()
                      << " flags, " << runs.size() << " model runs\n";
            return 0;
        }

        if (export_cmd->parsed()) {
            const auto res = app::load_resources(cfg.resources_dir);
            store::Store st(cfg.data_dir);
            emit(out_path, store::export_visit(st, visit_id, res.schema, {anonymize}).dump(2) + "\n");
            return 0;
        }

        if (import_visit->parsed()) {
            const auto res = app::load_resources(cfg.resources_dir);
            store::Store st(cfg.data_dir);
            Json archive;
            try {
                archive = Json::parse(text::read_file(archive_path));
            } catch (const Json::parse_error& e) {
                throw ParseError(std::string("archive: ") + e.what(), archive_path);
            }
            std::cout << "imported visit " << store::import_visit(st, archive, res.schema) << "\n";
            return 0;
        }

        require_dir(corpus);
        const bool json = format == "json";
        if (wer_cmd->parsed()) {
            norm.casefold = !no_casefold;
            norm.strip_punct = !no_strip;
            const auto res = app::load_resources(cfg.resources_dir);
            const auto pairs = eval::load_wer_pairs(corpus);
            if (pairs.empty()) throw ValidationError("corpus has no transcript pairs", corpus);
            const auto rows = eval::wer_batch(pairs, norm, &res.lexicon);
            emit(out_path, json ? eval::wer_json(pairs, rows, norm).dump(2) + "\n" : eval::wer_table(pairs, rows, norm));
        } else if (acc_cmd->parsed()) {
            const auto res = app::load_resources(cfg.resources_dir);
            const auto pairs = eval::load_document_pairs(corpus, res.schema);
            if (pairs.empty()) throw ValidationError("corpus has no EMR pairs", corpus);
            std::vector<std::string> ids;
            for (const auto& p : pairs) ids.push_back(p.id);
            const auto rows = eval::field_accuracy_batch(pairs, res.schema);
            emit(out_path, json ? eval::accuracy_json(ids, rows).dump(2) + "\n" : eval::accuracy_table(ids, rows));
        } else if (cat_cmd->parsed()) {
            const auto res = app::load_resources(cfg.resources_dir);
            const auto tally = eval::categorize_corpus(corpus, res.schema);
            emit(out_path, json ? eval::categorization_json(tally).dump(2) + "\n" : eval::categorization_table(tally));
        } else if (flags_cmd->parsed()) {
            const auto [ids, ratings] = eval::load_flag_ratings(corpus);
            const auto report = eval::rate_redflags(ids, ratings);
            emit(out_path, json ? eval::ratings_json(report).dump(2) + "\n" : eval::ratings_table(report));
        } else if (cross_cmd->parsed()) {
            const auto res = app::load_resources(cfg.resources_dir);
            const auto runs = eval::load_model_runs(corpus, res.schema);
            if (runs.empty()) throw ValidationError("corpus has no runs/ directory with model outputs", corpus);
            const auto rows = eval::cross_model_report(runs);
            emit(out_path, json ? eval::cross_model_json(rows).dump(2) + "\n" : eval::cross_model_table(rows));
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "vemr: error: " << e.what() << "\n";
        return 1;
    }
}
