from django.db import models


class RunRecord(models.Model):
    """Fields shared by every command run record."""

    STATUS_CHOICES = [
        ('success', 'Success'),
        ('failed', 'Failed'),
        ('pending', 'Pending'),
    ]

    status = models.CharField(
        max_length=20,
        choices=STATUS_CHOICES,
        default='pending',
        help_text="Status of the run"
    )

    error_message = models.TextField(
        blank=True,
        help_text="Error message if the run failed"
    )

    config_path = models.CharField(
        max_length=500,
        blank=True,
        help_text="Run-config file the command was started with"
    )

    output_dir = models.CharField(
        max_length=500,
        blank=True,
        help_text="Directory the artifacts were written to"
    )

    seed = models.PositiveBigIntegerField(
        default=0,
        help_text="Random seed of the run"
    )

    threads = models.PositiveIntegerField(
        default=0,
        help_text="Projector worker threads (0 = numba default)"
    )

    created_at = models.DateTimeField(
        auto_now_add=True,
        help_text="Timestamp of the run"
    )

    class Meta:
        abstract = True
        ordering = ['-created_at']


class SimulationRun(RunRecord):
    """One simulated list-mode realization."""

    phantom = models.CharField(
        max_length=30,
        help_text="Phantom kind"
    )

    target_counts = models.PositiveBigIntegerField(
        help_text="Expected total counts"
    )

    n_events = models.PositiveBigIntegerField(
        default=0,
        help_text="Number of events actually drawn"
    )

    tof_ps = models.FloatField(
        help_text="TOF resolution (FWHM, ps)"
    )

    n_bins = models.PositiveIntegerField(
        help_text="Number of TOF bins"
    )

    realization = models.PositiveIntegerField(
        default=0,
        help_text="Noise realization index"
    )

    geometry_hash = models.CharField(
        max_length=16,
        blank=True,
        help_text="Hex hash of scanner, TOF and grid configuration"
    )

    event_file = models.CharField(
        max_length=500,
        blank=True,
        help_text="Path of the LMEV event file"
    )

    class Meta(RunRecord.Meta):
        verbose_name = "Simulation Run"
        verbose_name_plural = "Simulation Runs"

    def __str__(self):
        return f"{self.phantom} {self.target_counts:.0e} counts, {self.tof_ps:g} ps/{self.n_bins} bins (r{self.realization})"


class ReconstructionRun(RunRecord):
    """One reconstruction of an event file."""

    ALGORITHM_CHOICES = [
        ('mlem', 'LM-MLEM'),
        ('osem', 'LM-OSEM'),
        ('emtv', 'LM-EM-TV'),
        ('spdhg', 'LM-SPDHG'),
        ('spdhgtv', 'LM-SPDHG-TV'),
        ('lmpd', 'LMPDnet'),
    ]

    algorithm = models.CharField(
        max_length=20,
        choices=ALGORITHM_CHOICES,
        help_text="Reconstruction algorithm"
    )

    event_file = models.CharField(
        max_length=500,
        help_text="Path of the reconstructed LMEV event file"
    )

    simulation_dir = models.CharField(
        max_length=500,
        blank=True,
        help_text="Simulation output directory holding truth image and ROI masks"
    )

    target_counts = models.PositiveBigIntegerField(
        default=0,
        help_text="Count level of the simulation"
    )

    tof_ps = models.FloatField(
        default=0.0,
        help_text="TOF resolution (FWHM, ps)"
    )

    n_bins = models.PositiveIntegerField(
        default=0,
        help_text="Number of TOF bins"
    )

    n_events = models.PositiveBigIntegerField(
        default=0,
        help_text="Number of events reconstructed"
    )

    n_iterations = models.PositiveIntegerField(
        default=0,
        help_text="Iterations (or unrolled phases for LMPDnet)"
    )

    n_subsets = models.PositiveIntegerField(
        default=1,
        help_text="Number of subsets"
    )

    beta = models.FloatField(
        default=0.0,
        help_text="TV weight"
    )

    final_objective = models.FloatField(
        null=True,
        blank=True,
        help_text="Objective value after the last iteration"
    )

    psnr = models.FloatField(
        null=True,
        blank=True,
        help_text="PSNR against the truth image (dB)"
    )

    ssim = models.FloatField(
        null=True,
        blank=True,
        help_text="Global SSIM against the truth image"
    )

    image_file = models.CharField(
        max_length=500,
        blank=True,
        help_text="Path of the reconstructed IMG2 file"
    )

    class Meta(RunRecord.Meta):
        verbose_name = "Reconstruction Run"
        verbose_name_plural = "Reconstruction Runs"
        indexes = [
            models.Index(fields=['algorithm', 'target_counts'], name='listrecon_r_algorit_5c1d2e_idx'),
            models.Index(fields=['status'], name='listrecon_r_status_8a3f0b_idx'),
        ]

    def __str__(self):
        return f"{self.get_algorithm_display()} on {self.event_file}"


class TrainingRun(RunRecord):
    """One training run of the unrolled network."""

    dataset_dir = models.CharField(
        max_length=500,
        help_text="Directory of (event file, truth image) pairs"
    )

    n_pairs = models.PositiveIntegerField(
        default=0,
        help_text="Number of training plus validation pairs"
    )

    epochs = models.PositiveIntegerField(
        default=0,
        help_text="Number of training epochs"
    )

    n_phases = models.PositiveIntegerField(
        default=0,
        help_text="Number of unrolled phases"
    )

    best_epoch = models.PositiveIntegerField(
        null=True,
        blank=True,
        help_text="Epoch with the lowest validation loss"
    )

    best_val_loss = models.FloatField(
        null=True,
        blank=True,
        help_text="Lowest validation MSE"
    )

    checkpoint_file = models.CharField(
        max_length=500,
        blank=True,
        help_text="Path of the LMPD checkpoint"
    )

    class Meta(RunRecord.Meta):
        verbose_name = "Training Run"
        verbose_name_plural = "Training Runs"

    def __str__(self):
        return f"Training on {self.dataset_dir} ({self.epochs} epochs)"
