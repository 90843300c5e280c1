#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cllmrec/pipeline.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string run_dir;
    std::string cache_dir;
    std::int64_t seed = -1;
    bool force = false;
};

cllmrec::RunConfig resolve_config(const GlobalOpts& g) {
    cllmrec::RunConfig cfg;
    if (!g.config_path.empty()) cfg = cllmrec::RunConfig::load(g.config_path);
    if (!g.run_dir.empty()) cfg.run_dir = g.run_dir;
    if (!g.cache_dir.empty()) cfg.cache_dir = g.cache_dir;
    if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
    cfg.validate();
    return cfg;
}

void report(const cllmrec::StageResult& r) {
    std::cout << r.name << (r.skipped ? ": up to date" : ": done") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"concept recommendation pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    app.add_option("--run-dir", g.run_dir, "override run.run_dir");
    app.add_option("--cache-dir", g.cache_dir, "override run.cache_dir");
    app.add_option("--seed", g.seed, "override run.seed");
    app.add_flag("--force", g.force, "rerun stages even when up to date");

    auto* cmd_init = app.add_subcommand("init-config", "write the default configuration");
    std::string init_path = "cllmrec.toml";
    cmd_init->add_option("path", init_path, "output path");

    app.add_subcommand("ingest", "build the corpus from a CSV export or the synthetic fixture");
    app.add_subcommand("encode", "embed catalog concepts and learner profiles");
    app.add_subcommand("distill", "collect teacher soft labels");

    auto* cmd_student = app.add_subcommand("train-student", "train the coarse ranker");
    std::string stage = "kd";
    cmd_student->add_option("--stage", stage, "kd | pref")->check(CLI::IsMember({"kd", "pref"}));

    app.add_subcommand("train-dkt", "train the knowledge-tracing model");
    app.add_subcommand("train-reranker", "train the fine ranker");
    app.add_subcommand("evaluate", "write metric reports for the current checkpoints");
    app.add_subcommand("joint-finetune", "optimize the weighted joint objective");
    app.add_subcommand("run-all", "ingest through evaluate in order");

    auto* cmd_rec = app.add_subcommand("recommend", "rank unseen concepts for one learner");
    int learner = 0;
    int top = 5;
    cmd_rec->add_option("--learner", learner, "learner id")->required();
    cmd_rec->add_option("--top", top, "list length");

    auto* cmd_exp = app.add_subcommand("experiment", "full pipeline per seed, aggregated report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (cmd_init->parsed()) {
            cllmrec::RunConfig{}.save(init_path);
            std::cout << "wrote " << init_path << "\n";
            return 0;
        }
        cllmrec::RunConfig cfg = resolve_config(g);
        cllmrec::Pipeline pipeline(cfg, g.force);
        if (app.got_subcommand("ingest")) report(pipeline.ingest());
        else if (app.got_subcommand("encode")) report(pipeline.encode());
        else if (app.got_subcommand("distill")) report(pipeline.distill());
        else if (cmd_student->parsed())
            report(pipeline.train_student_stage(stage == "kd" ? cllmrec::StudentStage::Kd
                                                              : cllmrec::StudentStage::Pref));
        else if (app.got_subcommand("train-dkt")) report(pipeline.train_dkt_stage());
        else if (app.got_subcommand("train-reranker")) report(pipeline.train_reranker_stage());
        else if (app.got_subcommand("evaluate")) {
            report(pipeline.evaluate());
            std::cout << cllmrec::read_file(pipeline.path("reports/summary.txt"));
        } else if (app.got_subcommand("run-all")) {
            pipeline.run_all();
            std::cout << cllmrec::read_file(pipeline.path("reports/summary.txt"));
        } else if (app.got_subcommand("joint-finetune")) {
            report(pipeline.joint_finetune());
        } else if (cmd_rec->parsed()) {
            std::cout << pipeline.recommend(learner, top) << "\n";
        } else if (cmd_exp->parsed()) {
            cllmrec::MetricReport agg = cllmrec::run_experiment(cfg, cfg.seeds, g.force);
            std::cout << agg.summary_table();
        }
        return 0;
    } catch (const cllmrec::PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code;
    } catch (const cllmrec::GatewayError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const cllmrec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
