// Stand-in for ffmpeg in tests. The "video" input is a text file holding
// "duration=<s>" and "audio=<0|1>" lines; audio extraction renders a 330 Hz
// tone whose phase tracks the window start, so different cuts are audibly
// (and byte-wise) different.
//
//   mock_media probe <input> <output>
//   mock_media frame <input> <time> <output>
//   mock_media audio <input> <time> <duration> <rate> <output>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "melbridge/dsp/audio.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (args.size() == 3 && args[0] == "probe") {
            std::ifstream in(args[1]);
            if (!in) throw std::runtime_error("cannot open " + args[1]);
            std::ofstream out(args[2]);
            out << in.rdbuf();
            return out ? 0 : 1;
        }
        if (args.size() == 4 && args[0] == "frame") {
            std::ofstream out(args[3]);
            out << "frame of " << args[1] << " at " << args[2] << "\n";
            return out ? 0 : 1;
        }
        if (args.size() == 6 && args[0] == "audio") {
            const double start = std::stod(args[2]);
            const double duration = std::stod(args[3]);
            const int rate = std::stoi(args[4]);
            melbridge::dsp::AudioClip clip;
            clip.sample_rate = rate;
            const std::size_t n = static_cast<std::size_t>(std::llround(duration * rate));
            clip.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = start + static_cast<double>(i) / rate;
                clip.samples[i] =
                    static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * 330.0 * t));
            }
            melbridge::dsp::write_wav(args[5], clip);
            return 0;
        }
        std::cerr << "usage: mock_media probe|frame|audio ...\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mock_media: " << e.what() << "\n";
        return 1;
    }
}
