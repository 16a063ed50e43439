#include <gtest/gtest.h>

#include <sys/wait.h>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>
#include <chrono>
#include <cmath>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    std::string cmd = std::string(CLAB_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t data_rows(const fs::path& csv) {
    std::ifstream in(csv);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);)
        if (!l.empty() && l[0] != '#' && (std::isdigit(static_cast<unsigned char>(l[0])) || l[0] == '-')) ++n;
    return n;
}

double field(const std::string& text, const std::string& key) {
    std::smatch m;
    std::regex re(key + R"(=(-?[0-9.eE+-]+))");
    if (!std::regex_search(text, m, re)) return NAN;
    return std::stod(m[1]);
}

struct Workdir {
    Workdir() : dir(fs::temp_directory_path() / "clab-cli-tests") {
        fs::create_directories(dir);
    }
    std::string at(const std::string& f) const { return (dir / f).string(); }
    fs::path dir;
};

} // namespace

TEST(Cli, SimulateBodeDesignPipeline) {
    Workdir w;
    auto sim = run("simulate --out " + w.at("ol.csv"));
    ASSERT_EQ(sim.code, 0) << sim.out;
    EXPECT_NE(sim.out.find("samples=120000"), std::string::npos) << sim.out;
    ASSERT_TRUE(fs::exists(w.at("ol.csv.json")));

    auto bode = run("bode " + w.at("ol.csv") + " --out " + w.at("ol_bode.csv") + " --svg " + w.at("ol.svg"));
    ASSERT_EQ(bode.code, 0) << bode.out;
    EXPECT_EQ(data_rows(w.at("ol_bode.csv")), 120u);
    EXPECT_LT(field(bode.out, "phi_pm"), 0.0) << bode.out;
    EXPECT_NE(slurp(w.at("ol.svg")).find("<svg"), std::string::npos);

    auto design = run("design --phi-d 45 --json --bode " + w.at("ol_bode.csv"));
    ASSERT_EQ(design.code, 0) << design.out;
    auto j = nlohmann::json::parse(design.out);
    EXPECT_NEAR(j["achieved_pm"].get<double>(), 45.0, 6.0);
    EXPECT_GT(j["alpha"].get<double>(), 1.0);

    auto cl = run("simulate --out " + w.at("cl.csv") + " --lead " + std::to_string(j["k"].get<double>()) + " " +
                  std::to_string(j["p"].get<double>()) + " " + std::to_string(j["z"].get<double>()));
    ASSERT_EQ(cl.code, 0) << cl.out;
    EXPECT_NE(cl.out.find("kind=closed_loop"), std::string::npos);
    auto clb = run("bode " + w.at("cl.csv") + " --out " + w.at("cl_bode.csv"));
    ASSERT_EQ(clb.code, 0) << clb.out;
    EXPECT_NEAR(field(clb.out, "phi_pm"), 45.0, 6.0) << clb.out;
}

TEST(Cli, SeedReproducibility) {
    Workdir w;
    ASSERT_EQ(run("simulate --preset fidelity --seed 11 --out " + w.at("a.csv")).code, 0);
    ASSERT_EQ(run("simulate --preset fidelity --seed 11 --out " + w.at("b.csv")).code, 0);
    ASSERT_EQ(run("simulate --preset fidelity --seed 12 --out " + w.at("c.csv")).code, 0);
    EXPECT_EQ(slurp(w.at("a.csv")), slurp(w.at("b.csv")));
    EXPECT_NE(slurp(w.at("a.csv")), slurp(w.at("c.csv")));
}

TEST(Cli, SingleFftFlag) {
    Workdir w;
    ASSERT_EQ(run("simulate --out " + w.at("s.csv")).code, 0);
    auto r = run("bode --single-fft " + w.at("s.csv") + " --out " + w.at("s_bode.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("source=single_fft"), std::string::npos) << r.out;
    EXPECT_GT(data_rows(w.at("s_bode.csv")), 120u);
}

TEST(Cli, SynthesizeAndVerify) {
    Workdir w;
    auto s = run("synthesize --catalog " CLAB_SOURCE_DIR "/data/questions/feedback.json --out " + w.at("st.json") + " --dot " +
                 w.at("st.dot"));
    ASSERT_EQ(s.code, 0) << s.out;
    EXPECT_EQ(field(s.out, "states"), 28);
    EXPECT_NE(slurp(w.at("st.dot")).find("digraph"), std::string::npos);
    auto v = run("verify --catalog " CLAB_SOURCE_DIR "/data/questions/feedback.json --strategy " + w.at("st.json") +
                 " --plays 500 --depth 8");
    ASSERT_EQ(v.code, 0) << v.out;
    EXPECT_EQ(field(v.out, "violations"), 0);
    EXPECT_EQ(field(v.out, "states"), field(v.out, "covered"));
}

TEST(Cli, ExitCodes) {
    Workdir w;
    EXPECT_EQ(run("simulate --bogus").code, 2);
    EXPECT_EQ(run("design --phi-d 120").code, 2);
    EXPECT_EQ(run("bode /nonexistent.csv").code, 2);
    auto bad = run("simulate --preset nope --out " + w.at("x.csv"));
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("error: invalid_argument"), std::string::npos) << bad.out;
    std::ofstream(w.at("garbage.csv")) << "not,a,record\n";
    EXPECT_EQ(run("bode " + w.at("garbage.csv")).code, 1);
    EXPECT_EQ(run("export --archive arc-1 --data-dir " + w.at("empty-data")).code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, ServeAnswersHealth) {
    Workdir w;
    fs::remove_all(w.dir / "serve-data");
    std::string log = w.at("serve.log");
    std::string cmd = std::string(CLAB_CLI) + " serve --port 0 --data-dir " + w.at("serve-data") + " > " + log + " 2>&1 & echo $!";
    FILE* p = popen(cmd.c_str(), "r");
    ASSERT_TRUE(p);
    int pid = 0;
    ASSERT_EQ(std::fscanf(p, "%d", &pid), 1);
    pclose(p);
    int port = 0;
    for (int i = 0; i < 600 && port == 0; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::smatch m;
        std::string text = slurp(log);
        std::regex re(R"(listening on [0-9.]+:([0-9]+))");
        if (std::regex_search(text, m, re)) port = std::stoi(m[1]);
    }
    ASSERT_GT(port, 0) << slurp(log);
    auto health = std::system(("curl -sf http://127.0.0.1:" + std::to_string(port) + "/health > /dev/null").c_str());
    kill(pid, SIGTERM);
    for (int i = 0; i < 100 && kill(pid, 0) == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    EXPECT_EQ(health, 0);
    EXPECT_TRUE(fs::exists(w.dir / "serve-data" / "strategies"));
}
