#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "lenssim/bridge_io.hpp"
#include "lenssim/cli.hpp"
#include "lenssim/config.hpp"
#include "lenssim/error.hpp"
#include "lenssim/image_io.hpp"
#include "lenssim/psf_io.hpp"
#include "oracles.hpp"

using namespace lenssim;
namespace fs = std::filesystem;

namespace {

template <typename Fn>
Error caught(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorKind::io, "");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PsfGrid sample_grid(int rows, int cols, int d, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PsfGrid g;
  g.rows = rows;
  g.cols = cols;
  for (int i = 0; i < rows * cols; ++i) {
    Image k(d, d);
    for (Eigen::Index j = 0; j < k.size(); ++j) k.data()[j] = u(gen);
    k /= k.sum();
    g.kernels.push_back({k, 12e-6});
    g.field_coords.push_back({u(gen), -u(gen)});
  }
  g.wavelengths_um = {8, 10, 12};
  return g;
}

struct Run {
  int status;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = run_pipeline(args, out, err);
  return {status, out.str(), err.str()};
}

const char* kSmallConfig = R"(
[optics]
grid_size = 32
rows = 2
cols = 2
psf_size = 9
wavelengths_um = [8.0, 12.0]

[degrade]
patch_size = 40
overlap = 8

[blurmap]
height = 80
width = 80
)";

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty config gives the defaults") {
    const PipelineConfig c = parse_config_string("");
    CHECK(c == PipelineConfig{});
    CHECK(c.degrade.q == 90.0);
    CHECK(c.degrade.sigma == 0.0003);
    CHECK(c.gates.eta == 0.2);
    CHECK(c.gates.theta_s == -3.0);
    CHECK(c.gates.theta_l == -2.0);
    CHECK(c.gates.theta_lambda == -4.0);
  }
  SUBCASE("negative sigma names the field") {
    const Error e = caught([] { parse_config_string("[degrade]\nsigma = -1\n"); });
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("sigma") != std::string::npos);
  }
  SUBCASE("unknown keys are all listed") {
    const Error e = caught([] { parse_config_string("colour = 1\n[degrade]\nsgima = 0.1\n[optics.seidel]\ncomma = 1\n"); });
    const std::string msg = e.what();
    CHECK(msg.find("colour") != std::string::npos);
    CHECK(msg.find("degrade.sgima") != std::string::npos);
    CHECK(msg.find("optics.seidel.comma") != std::string::npos);
  }
  SUBCASE("type and enum errors") {
    CHECK(caught([] { parse_config_string("[degrade]\nq = \"ninety\"\n"); }).kind() == ErrorKind::config);
    CHECK(caught([] { parse_config_string("[degrade]\nmethod = \"fast\"\n"); }).kind() == ErrorKind::config);
    CHECK(caught([] { parse_config_string("[degrade]\nseed = -4\n"); }).kind() == ErrorKind::config);
    CHECK(caught([] { parse_config_string("[gates]\neta = 1.0\n"); }).kind() == ErrorKind::config);
    CHECK(caught([] { parse_config_string("[optics]\ngrid_size = 31\n"); }).kind() == ErrorKind::config);
    CHECK(caught([] { parse_config_string("[degrade\n"); }).kind() == ErrorKind::config);
  }
  SUBCASE("integers are accepted for float fields") {
    CHECK(parse_config_string("[degrade]\nq = 10\n").degrade.q == 10.0);
  }
  SUBCASE("round trip") {
    const PipelineConfig c = parse_config_string(R"(
[optics]
grid_size = 64
wavelengths_um = [8.5, 9.25, 11.125]
spectral_weights = [1.0, 0.5, 0.25]
zernike = [[4, 0.3], [8, -0.125]]
remove_piston_tilt = true
[optics.seidel]
coma = 0.1
[degrade]
quantization = "literal"
q = 0.001
method = "direct"
seed = 12345678901
[gates]
alpha_l = 0.75
[bridge]
weights = "w.palw"
[dataset]
manifest = "in.txt"
write_raw = true
)");
    const PipelineConfig again = parse_config_string(to_toml(c));
    CHECK(again == c);
    CHECK(again.degrade.quantization == DegradationConfig::Quantization::literal);
    CHECK(again.optics.zernike.size() == 2);
    CHECK(again.degrade.seed == 12345678901ull);
    CHECK(parse_config_string(to_toml(PipelineConfig{})) == PipelineConfig{});
  }
  SUBCASE("file paths resolve next to the config") {
    const auto dir = oracle::temp_dir("config_paths");
    std::ofstream(dir / "c.toml") << "[dataset]\nmanifest = \"in.txt\"\n";
    CHECK(parse_config(dir / "c.toml").dataset.manifest == (dir / "in.txt").string());
    CHECK(caught([&] { parse_config(dir / "missing.toml"); }).kind() == ErrorKind::io);
  }
  SUBCASE("field list follows the grid") {
    OpticsConfig o;
    o.pupil.grid_size = 32;
    const auto fields = make_fields(o);
    CHECK(fields.size() == 48);
    CHECK(fields[0].fx == doctest::Approx(-0.875));
    CHECK(fields[47].fy == doctest::Approx(5.0 / 6.0));
  }
}

TEST_CASE("psf grid files") {
  const auto dir = oracle::temp_dir("psf_io");
  const PsfGrid g = sample_grid(6, 8, 31, 1);

  SUBCASE("write then read is bit exact") {
    write_psf_grid(dir / "g.psfg", g);
    CHECK(fs::exists(psf_sidecar_path(dir / "g.psfg")));
    const PsfGrid r = read_psf_grid(dir / "g.psfg");
    CHECK(r.rows == 6);
    CHECK(r.cols == 8);
    CHECK(r.pixel_pitch() == 12e-6);
    CHECK(r.wavelengths_um == g.wavelengths_um);
    for (std::size_t i = 0; i < 48; ++i) {
      CHECK((r.kernels[i].samples == g.kernels[i].samples.cast<float>().cast<double>()).all());
      CHECK(r.field_coords[i] == g.field_coords[i]);
    }
    // A second write of the read grid reproduces the same bytes.
    write_psf_grid(dir / "h.psfg", r);
    CHECK(slurp(dir / "g.psfg") == slurp(dir / "h.psfg"));
    CHECK(psf_grid_id(g) == psf_grid_id(r));
    CHECK(psf_grid_id(g).size() == 16);
  }
  SUBCASE("header layout") {
    const auto bytes = encode_psf_grid(sample_grid(1, 2, 3, 2));
    CHECK(bytes.size() == 4 + 4 * 4 + 8 + 2 * 9 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PSFG");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 1);
    CHECK(bytes[12] == 2);
    CHECK(bytes[16] == 3);
  }
  SUBCASE("distinct error kinds") {
    auto bytes = encode_psf_grid(g);
    auto truncated = bytes;
    truncated.resize(truncated.size() - 1);
    CHECK(caught([&] { decode_psf_grid(truncated); }).kind() == ErrorKind::truncated);
    auto swapped = bytes;
    std::reverse(swapped.begin(), swapped.begin() + 4);
    CHECK(caught([&] { decode_psf_grid(swapped); }).kind() == ErrorKind::bad_magic);
    auto garbage = bytes;
    garbage[0] = 'X';
    CHECK(caught([&] { decode_psf_grid(garbage); }).kind() == ErrorKind::bad_magic);
    auto version = bytes;
    version[4] = 9;
    CHECK(caught([&] { decode_psf_grid(version); }).kind() == ErrorKind::unsupported_version);
    auto huge = bytes;
    huge[8] = huge[9] = huge[10] = huge[11] = 0xff;
    CHECK(caught([&] { decode_psf_grid(huge); }).kind() == ErrorKind::dimension_overflow);
    CHECK(caught([&] { decode_psf_grid(std::vector<std::uint8_t>{'P', 'S'}); }).kind() == ErrorKind::truncated);
  }
  SUBCASE("missing file") { CHECK(caught([&] { read_psf_grid(dir / "none.psfg"); }).kind() == ErrorKind::io); }
}

TEST_CASE("command line") {
  const auto dir = oracle::temp_dir("cli");
  std::ofstream(dir / "c.toml") << kSmallConfig;
  const std::string cfg = (dir / "c.toml").string();
  const std::string grid = (dir / "g.psfg").string();

  SUBCASE("usage and errors") {
    const Run bogus = run({"bogus"});
    CHECK(bogus.status != 0);
    CHECK(bogus.err.find("Usage") != std::string::npos);
    CHECK(run({}).status != 0);
    const Run missing = run({"metrics", "--a", (dir / "nope.png").string(), "--b", (dir / "nope.png").string()});
    CHECK(missing.status == 1);
    CHECK(missing.err.find("error") != std::string::npos);
    CHECK(missing.out.empty());
    CHECK(run({"--config", (dir / "none.toml").string(), "psf", "--out", grid}).status == 1);
  }

  SUBCASE("psf, degrade, blurmap, gates and metrics") {
    const Run psf = run({"--config", cfg, "psf", "--out", grid});
    REQUIRE(psf.status == 0);
    CHECK(psf.out.find("rows=2\ncols=2\npsf_size=9") != std::string::npos);
    CHECK(read_psf_grid(grid).kernels.size() == 4);

    std::mt19937 gen(3);
    Image clean(80, 80);
    for (Eigen::Index i = 0; i < clean.size(); ++i) clean.data()[i] = (gen() % 1000) / 1000.0;
    save_image(dir / "clean.png", clean);

    std::vector<std::string> outputs;
    for (const char* threads : {"1", "3"}) {
      const std::string out = (dir / (std::string("raw") + threads + ".png")).string();
      const Run r = run({"--config", cfg, "--threads", threads, "degrade", "--psf-grid", grid, "--in",
                         (dir / "clean.png").string(), "--out", out, "--q", "90", "--sigma", "0.0003", "--seed", "7",
                         "--raw", out + ".f32"});
      REQUIRE(r.status == 0);
      CHECK(r.out.find("q_step=0.0054931640625") != std::string::npos);
      CHECK(r.out.find("seed=7") != std::string::npos);
      outputs.push_back(slurp(out) + slurp(out + ".f32"));
    }
    CHECK(outputs[0] == outputs[1]);

    const Run m = run({"metrics", "--a", (dir / "clean.png").string(), "--b", (dir / "raw1.png").string()});
    REQUIRE(m.status == 0);
    CHECK(m.out.rfind("mse=", 0) == 0);
    CHECK(m.out.find("\npsnr=") != std::string::npos);
    CHECK(run({"metrics", "--a", (dir / "clean.png").string(), "--b", (dir / "clean.png").string()}).out ==
          "mse=0\npsnr=inf\n");

    const Run bm = run({"--config", cfg, "blurmap", "--psf-grid", grid, "--out", (dir / "k.f32").string(), "--png",
                        (dir / "k.png").string()});
    REQUIRE(bm.status == 0);
    const Image k = read_raw_f32(dir / "k.f32", 80, 80);
    CHECK(k.minCoeff() >= 0.0);
    CHECK(k.maxCoeff() <= 1.0);
    CHECK(fs::exists(dir / "k.png"));

    const Run gt = run({"gates", "--blurmap", (dir / "k.f32").string(), "--height", "80", "--width", "80",
                        "--out-prefix", (dir / "g_").string()});
    REQUIRE(gt.status == 0);
    for (const char* n : {"g_small.f32", "g_large.f32", "g_laplacian.f32"}) {
      const Image g = read_raw_f32(dir / n, 80, 80);
      CHECK(g.minCoeff() >= 0.0);
      CHECK(g.maxCoeff() <= 1.0);
    }
  }

  SUBCASE("bridge init and run") {
    REQUIRE(run({"bridge", "init", "--channels", "4", "--groups", "2", "--se-ratio", "2", "--seed", "5", "--out",
                 (dir / "w.palw").string()})
                .status == 0);
    FeatureTensor<double> x(1, 4, 6, 6);
    x.setRandom();
    write_tensor(dir / "x.ftns", x);
    write_raw_f32(dir / "k.f32", Image::Constant(6, 6, 0.5));
    const Run r = run({"bridge", "run", "--features", (dir / "x.ftns").string(), "--weights",
                       (dir / "w.palw").string(), "--blurmap", (dir / "k.f32").string(), "--out",
                       (dir / "y.ftns").string(), "--dump-dir", (dir / "dump").string()});
    REQUIRE(r.status == 0);
    CHECK(r.out == "dims=1x4x6x6\n");
    const auto y = read_tensor(dir / "y.ftns");
    const auto ref = bridge_forward(read_tensor(dir / "x.ftns"), read_raw_f32(dir / "k.f32", 6, 6), GateParams{},
                                    read_weights(dir / "w.palw"));
    for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(std::abs(y.data()[i] - ref.data()[i]) < 1e-6);
    for (const char* n : {"small.ftns", "large.ftns", "laplacian.ftns", "fused.ftns", "excited.ftns"})
      CHECK(fs::exists(dir / "dump" / n));
    CHECK(run({"bridge"}).status != 0);
  }

  SUBCASE("dataset") {
    std::ofstream(dir / "d.toml") << kSmallConfig << "[dataset]\nwidth = 80\nheight = 80\n";
    REQUIRE(run({"--config", cfg, "psf", "--out", grid}).status == 0);
    Image im(60, 90);
    im.setConstant(0.5);
    save_image(dir / "a.png", im);
    std::ofstream(dir / "in.txt") << "image=a.png\nimage=broken.png\n";
    const Run r = run({"--config", (dir / "d.toml").string(), "--seed", "3", "dataset", "--manifest",
                       (dir / "in.txt").string(), "--out-dir", (dir / "ds").string(), "--psf-grid", grid});
    REQUIRE(r.status == 0);
    CHECK(r.out.find("inputs=2\nsamples=1\nskipped=1") != std::string::npos);
    CHECK(r.err.find("skipped input 1") != std::string::npos);
    const Run quiet = run({"--quiet", "--config", (dir / "d.toml").string(), "dataset", "--manifest",
                           (dir / "in.txt").string(), "--out-dir", (dir / "ds2").string(), "--psf-grid", grid});
    CHECK(quiet.status == 0);
    CHECK(quiet.err.empty());
    std::ofstream(dir / "bad.txt") << "image=broken.png\n";
    CHECK(run({"--config", (dir / "d.toml").string(), "dataset", "--manifest", (dir / "bad.txt").string(),
               "--out-dir", (dir / "ds3").string(), "--psf-grid", grid})
              .status == 1);
  }
}
